#include "mdns/masked_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdns/error.hpp"

namespace mdns {
namespace {

constexpr std::size_t kChunk = 2048;

// Inverse-CDF draw from an unnormalised row of N nonnegative entries.
int draw_token(const double* row, int N, Rng& rng) {
  double total = 0.0;
  for (int n = 0; n < N; ++n) total += row[n];
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (int n = 0; n < N - 1; ++n) {
    acc += row[n];
    if (u < acc) return n;
  }
  return N - 1;
}

}  // namespace

void evaluate_chunked(ScoreFunction& score, const std::vector<const MaskedSeq*>& states,
                      const std::vector<double>& times, std::vector<double>& out) {
  const std::size_t D = score.sites();
  const std::size_t DN = D * score.vocab();
  const bool timed = !times.empty();
  out.resize(states.size() * DN);
  std::vector<Token> buf;
  for (std::size_t begin = 0; begin < states.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, states.size() - begin);
    buf.resize(n * D);
    for (std::size_t i = 0; i < n; ++i) std::copy(states[begin + i]->begin(), states[begin + i]->end(), buf.begin() + i * D);
    score.evaluate(buf.data(), timed ? times.data() + begin : nullptr, n, out.data() + begin * DN);
  }
}

RewardFn lattice_reward(const ModelSpec& spec) {
  return [spec](std::span<const Token> x) { return lattice::reward(spec, x); };
}

std::vector<TrajectoryRecord> sample_trajectories(ScoreFunction& score, const ModelSpec& spec, std::size_t B,
                                                  Rng& rng) {
  if (score.sites() != spec.sites() || score.vocab() != spec.N)
    throw_config("score model dimensions do not match the model spec");
  return sample_trajectories(score, lattice_reward(spec), B, rng);
}

std::vector<TrajectoryRecord> sample_trajectories(ScoreFunction& score, const RewardFn& reward, std::size_t B,
                                                  Rng& rng) {
  if (score.time_conditioned()) throw_config("masked sampler requires a score without time conditioning");
  const int D = score.sites();
  const int N = score.vocab();
  const double logN = std::log(static_cast<double>(N));
  const std::uint64_t base = rng();

  std::vector<Rng> rngs;
  rngs.reserve(B);
  std::vector<TrajectoryRecord> out(B);
  std::vector<Token> states(B * D, kMask);
  for (std::size_t i = 0; i < B; ++i) {
    rngs.emplace_back(derive_key(base, i));
    out[i].perm.resize(D);
    std::iota(out[i].perm.begin(), out[i].perm.end(), 0);
    std::shuffle(out[i].perm.begin(), out[i].perm.end(), rngs[i]);
  }

  std::vector<double> s(kChunk * D * N);
  for (int step = 0; step < D; ++step) {
    for (std::size_t begin = 0; begin < B; begin += kChunk) {
      const std::size_t n = std::min(kChunk, B - begin);
      score.evaluate(states.data() + begin * D, nullptr, n, s.data());
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = begin + j;
        const int pos = out[i].perm[step];
        const double* row = &s[(j * D + pos) * N];
        const int tok = draw_token(row, N, rngs[i]);
        states[i * D + pos] = static_cast<Token>(tok + 1);
        out[i].log_weight += -logN - std::log(row[tok]);
      }
    }
  }
  for (std::size_t i = 0; i < B; ++i) {
    out[i].final.assign(states.begin() + i * D, states.begin() + (i + 1) * D);
    out[i].log_weight += reward(out[i].final);
    if (!std::isfinite(out[i].log_weight))
      throw_numeric("non-finite log-weight for trajectory " + std::to_string(i));
  }
  return out;
}

std::vector<ReplayStep> reconstruct_states(const TrajectoryRecord& record) {
  const std::size_t D = record.final.size();
  std::vector<ReplayStep> steps;
  steps.reserve(D);
  MaskedSeq state(D, kMask);
  for (std::size_t d = 0; d < D; ++d) {
    const int pos = record.perm[d];
    steps.push_back({state, pos, record.final[pos]});
    state[pos] = record.final[pos];
  }
  return steps;
}

MaskedSeq remask(std::span<const Token> x, double lambda, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw_config("remask probability must lie in [0, 1]");
  MaskedSeq out(x.begin(), x.end());
  for (auto& tok : out)
    if (rng.uniform() < lambda) tok = kMask;
  return out;
}

PathReplay replay(ScoreFunction& score, const ModelSpec& spec, std::span<const TrajectoryRecord> records) {
  return replay(score, lattice_reward(spec), records);
}

PathReplay replay(ScoreFunction& score, const RewardFn& reward, std::span<const TrajectoryRecord> records) {
  const int N = score.vocab();
  const std::size_t D = score.sites();
  const double logN = std::log(static_cast<double>(N));
  PathReplay out;
  out.W.assign(records.size(), 0.0);
  out.calls.reserve(records.size() * D);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (auto& step : reconstruct_states(records[i])) {
      PathCall call;
      call.traj = i;
      call.state = std::move(step.state);
      call.dW_ds.push_back({step.position * N + step.token - 1, 0.0});
      out.calls.push_back(std::move(call));
    }

  std::vector<const MaskedSeq*> states;
  states.reserve(out.calls.size());
  for (const auto& c : out.calls) states.push_back(&c.state);
  std::vector<double> s;
  evaluate_chunked(score, states, {}, s);

  for (std::size_t c = 0; c < out.calls.size(); ++c) {
    auto& entry = out.calls[c].dW_ds[0];
    const double sv = s[c * D * N + entry.first];
    out.W[out.calls[c].traj] += -logN - std::log(sv);
    entry.second = -1.0 / sv;
  }
  for (std::size_t i = 0; i < records.size(); ++i) out.W[i] += reward(records[i].final);
  return out;
}

std::vector<WeightedSample> to_weighted(std::span<const TrajectoryRecord> records) {
  std::vector<WeightedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.final, r.log_weight});
  return out;
}

}  // namespace mdns
