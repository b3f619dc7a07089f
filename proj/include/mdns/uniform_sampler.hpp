#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/losses.hpp"
#include "mdns/masked_sampler.hpp"
#include "mdns/path.hpp"
#include "mdns/rng.hpp"
#include "mdns/score.hpp"

namespace mdns {

/// Uniform-diffusion sampler settings. The schedule is gamma(t) = 1/t, so a
/// token survives corruption up to time t with probability t. Steps start at
/// t_k = eps + k dt with dt = (1 - eps) / K.
struct UdnsConfig {
  int K = 50;
  double eps = 0.2;

  double dt() const { return (1.0 - eps) / K; }
  double time(int k) const { return eps + k * dt(); }
  /// Per-entry jump scale dt gamma(t_k) / N.
  double jump_scale(int k, int N) const { return dt() / (time(k) * N); }

  /// Throws unless K >= 1, 0 < eps < 1 and the reference process keeps every
  /// per-step jump probability at most 1 for this (D, N).
  void validate(int D, int N) const;

  friend bool operator==(const UdnsConfig&, const UdnsConfig&) = default;
};

void to_json(nlohmann::json& j, const UdnsConfig& c);
void from_json(const nlohmann::json& j, UdnsConfig& c);

struct Jump {
  int step = 0;
  int site = 0;
  Token token = 0;
};

/// Initial state plus the realised jumps; consecutive states differ in at
/// most one site.
struct UdnsTrajectory {
  TokenSeq initial;
  std::vector<Jump> jumps;
  TokenSeq final;
  double log_weight = 0.0;
};

/// Euler simulation of the controlled chain: per step, jump to x^{d<-n} with
/// probability c s(x, t)[d, n] (c = dt gamma(t) / N), otherwise stay. The
/// log-weight adds -log s for a jump and
/// -log[(1 - c sum s) / (1 - c D (N - 1))] for a stay, then r(final).
std::vector<UdnsTrajectory> sample_trajectories_unif(ScoreFunction& score, const RewardFn& reward,
                                                     const UdnsConfig& config, std::size_t B, Rng& rng);
std::vector<UdnsTrajectory> sample_trajectories_unif(ScoreFunction& score, const ModelSpec& spec,
                                                     const UdnsConfig& config, std::size_t B, Rng& rng);

/// The K + 1 states X_{t_0}, ..., X_{t_K}.
std::vector<TokenSeq> trajectory_states(const UdnsTrajectory& traj, const UdnsConfig& config);

/// Re-evaluates W_i(theta) with its partial derivatives in the score entries.
PathReplay replay_unif(ScoreFunction& score, const RewardFn& reward, const UdnsConfig& config,
                       std::span<const UdnsTrajectory> trajs);

std::vector<WeightedSample> to_weighted(std::span<const UdnsTrajectory> trajs);

/// Replaces each token by a uniform draw from {1..N} with probability 1 - t.
TokenSeq corrupt(std::span<const Token> x, double t, int N, Rng& rng);

/// Weighted denoising score-entropy loss over corrupted buffer samples with
/// t ~ Unif(eps, 1), R replicates per sample, normalised by R.
LossOutput wdce_unif(std::span<const WeightedSample> buffer, ScoreFunction& score, const UdnsConfig& config, int R,
                     Rng& rng);

}  // namespace mdns
