#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdns/masked_sampler.hpp"
#include "mdns/path.hpp"
#include "mdns/rng.hpp"
#include "mdns/score.hpp"

namespace mdns {

enum class Objective { Rerf, Lv, Ce, Wdce };
/// Control variate subtracted from the detached weights in RERF.
enum class Baseline { Mean, LogZ, Zero };
/// WDCE per-replicate weight w(lambda).
enum class WScheme { One, InvLambda };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& name);
std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& name);
std::string to_string(WScheme w);
WScheme wscheme_from_string(const std::string& name);

/// Sparse adjoint for one score evaluation: entries (d * N + n, value).
struct AdjointCall {
  MaskedSeq state;
  double t = NAN;
  std::vector<std::pair<int, double>> adjoint;
};

/// A scalar objective and the output adjoints whose backward pass yields its
/// gradient.
struct LossOutput {
  double value = 0.0;
  std::vector<AdjointCall> calls;
};

/// log( (1/B) sum_i e^{W_i} ).
double estimate_logZ(std::span<const double> W);
/// Median of estimate_logZ over `groups` contiguous, equally sized groups.
double median_logZ(std::span<const double> W, std::size_t groups);
/// Self-normalised weights softmax(W).
std::vector<double> softmax_weights(std::span<const double> W);

/// The path objectives take W_i(theta) from `replay` and the detached weights
/// W-bar_i of the sampling step from `detached`; both coincide at the point
/// where the gradient is taken.
///
/// RERF: mean_i (W-bar_i - b) W_i, b the batch mean, estimate_logZ or 0.
LossOutput rerf(const PathReplay& replay, std::span<const double> detached, Baseline baseline = Baseline::Mean);
/// LV: unbiased sample variance of W_i(theta).
LossOutput lv(const PathReplay& replay);
/// CE: sum_i softmax(W-bar)_i W_i.
LossOutput ce(const PathReplay& replay, std::span<const double> detached);
LossOutput path_loss(Objective objective, const PathReplay& replay, std::span<const double> detached,
                     Baseline baseline = Baseline::Mean);

/// Weighted denoising cross-entropy over remasked buffer samples: R
/// replicates per sample, lambda ~ Unif(0, 1), normalised by R.
LossOutput wdce(std::span<const WeightedSample> buffer, ScoreFunction& score, int R, WScheme scheme, Rng& rng);

/// Accumulates the gradient of loss.value into grads.
void backprop(ScoreModel& model, const LossOutput& loss, GradBuffer& grads);

}  // namespace mdns
