#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdns/lattice.hpp"
#include "mdns/path.hpp"
#include "mdns/rng.hpp"
#include "mdns/score.hpp"

namespace mdns {

/// A masked-diffusion trajectory: the unmasking order and the final sample
/// determine every intermediate state.
struct TrajectoryRecord {
  std::vector<int> perm;
  TokenSeq final;
  double log_weight = 0.0;
};

struct WeightedSample {
  TokenSeq final;
  double log_weight = 0.0;
};

using RewardFn = std::function<double(std::span<const Token>)>;

/// r(x) of the lattice model at spec.beta.
RewardFn lattice_reward(const ModelSpec& spec);

struct ReplayStep {
  MaskedSeq state;  // before unmasking `position`
  int position = 0;
  Token token = 0;
};

/// Random-order autoregressive sampling of B trajectories with log-weights
/// W = sum_d log((1/N) / s(state)[pos, token]) + r(final). The reward uses
/// spec.beta. Trajectory i draws from its own stream derived from one draw of
/// `rng`, so results do not depend on batching.
std::vector<TrajectoryRecord> sample_trajectories(ScoreFunction& score, const ModelSpec& spec, std::size_t B,
                                                  Rng& rng);
std::vector<TrajectoryRecord> sample_trajectories(ScoreFunction& score, const RewardFn& reward, std::size_t B,
                                                  Rng& rng);

std::vector<ReplayStep> reconstruct_states(const TrajectoryRecord& record);

/// Each entry is masked independently with probability lambda.
MaskedSeq remask(std::span<const Token> x, double lambda, Rng& rng);

/// Re-evaluates W_i(theta) for every record under `score`, plus the calls
/// needed for its gradient (dW/ds = -1/s at each chosen entry).
PathReplay replay(ScoreFunction& score, const ModelSpec& spec, std::span<const TrajectoryRecord> records);
PathReplay replay(ScoreFunction& score, const RewardFn& reward, std::span<const TrajectoryRecord> records);

std::vector<WeightedSample> to_weighted(std::span<const TrajectoryRecord> records);

/// Evaluates `score` on many queries in fixed-size chunks.
void evaluate_chunked(ScoreFunction& score, const std::vector<const MaskedSeq*>& states,
                      const std::vector<double>& times, std::vector<double>& out);

}  // namespace mdns
