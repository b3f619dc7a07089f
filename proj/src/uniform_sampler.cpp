#include "mdns/uniform_sampler.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"

namespace mdns {
namespace {

constexpr std::size_t kChunk = 2048;

double off_diagonal_sum(const double* s, std::span<const Token> x, int N) {
  double S = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d)
    for (int n = 0; n < N; ++n)
      if (n + 1 != x[d]) S += s[d * N + n];
  return S;
}

// Off-diagonal entry (d, n) whose cumulative mass first exceeds `target`.
// Rounding can leave target at the total; the last entry is returned then.
std::pair<int, int> locate_jump(const double* s, std::span<const Token> x, int N, double target) {
  std::pair<int, int> last{-1, -1};
  double acc = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d)
    for (int n = 0; n < N; ++n) {
      if (n + 1 == x[d]) continue;
      acc += s[d * N + n];
      last = {static_cast<int>(d), n};
      if (target < acc) return last;
    }
  return last;
}

}  // namespace

void UdnsConfig::validate(int D, int N) const {
  if (K < 1) throw_config("udns.K must be >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw_config("udns.eps must lie in (0, 1)");
  const double p = jump_scale(0, N) * D * (N - 1);
  if (p >= 1.0)
    throw_config("reference jump probability " + std::to_string(p) + " at t = " + std::to_string(eps) +
                 " is not below 1; increase K or eps");
}

void to_json(nlohmann::json& j, const UdnsConfig& c) { j = nlohmann::json{{"K", c.K}, {"eps", c.eps}}; }

void from_json(const nlohmann::json& j, UdnsConfig& c) {
  c.K = j.value("K", 50);
  c.eps = j.value("eps", 0.2);
}

std::vector<UdnsTrajectory> sample_trajectories_unif(ScoreFunction& score, const ModelSpec& spec,
                                                     const UdnsConfig& config, std::size_t B, Rng& rng) {
  if (score.sites() != spec.sites() || score.vocab() != spec.N)
    throw_config("score model dimensions do not match the model spec");
  return sample_trajectories_unif(score, lattice_reward(spec), config, B, rng);
}

std::vector<UdnsTrajectory> sample_trajectories_unif(ScoreFunction& score, const RewardFn& reward,
                                                     const UdnsConfig& config, std::size_t B, Rng& rng) {
  if (!score.time_conditioned()) throw_config("uniform sampler requires a time-conditioned score");
  const int D = score.sites();
  const int N = score.vocab();
  config.validate(D, N);
  const std::size_t DN = static_cast<std::size_t>(D) * N;
  const double ref_rate = static_cast<double>(D) * (N - 1);
  const std::uint64_t base = rng();

  std::vector<Rng> rngs;
  rngs.reserve(B);
  std::vector<UdnsTrajectory> out(B);
  std::vector<Token> states(B * D);
  for (std::size_t i = 0; i < B; ++i) {
    rngs.emplace_back(derive_key(base, i));
    for (int d = 0; d < D; ++d) states[i * D + d] = static_cast<Token>(1 + rngs[i].below(N));
    out[i].initial.assign(states.begin() + i * D, states.begin() + (i + 1) * D);
  }

  std::vector<double> s(kChunk * DN), times(kChunk);
  for (int k = 0; k < config.K; ++k) {
    const double t = config.time(k);
    const double c = config.jump_scale(k, N);
    for (std::size_t begin = 0; begin < B; begin += kChunk) {
      const std::size_t n = std::min(kChunk, B - begin);
      std::fill(times.begin(), times.begin() + n, t);
      score.evaluate(states.data() + begin * D, times.data(), n, s.data());
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = begin + j;
        Token* x = &states[i * D];
        const double* row = &s[j * DN];
        const double S = off_diagonal_sum(row, {x, static_cast<std::size_t>(D)}, N);
        if (c * S > 1.0)
          throw_numeric("total jump probability " + std::to_string(c * S) + " exceeds 1 at t = " +
                        std::to_string(t) + " (trajectory " + std::to_string(i) + ")");
        const double u = rngs[i].uniform();
        if (u < c * S) {
          const auto [jd, jn] = locate_jump(row, {x, static_cast<std::size_t>(D)}, N, u / c);
          out[i].log_weight -= std::log(row[jd * N + jn]);
          x[jd] = static_cast<Token>(jn + 1);
          out[i].jumps.push_back({k, jd, static_cast<Token>(jn + 1)});
        } else {
          out[i].log_weight -= std::log((1.0 - c * S) / (1.0 - c * ref_rate));
        }
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

std::vector<TokenSeq> trajectory_states(const UdnsTrajectory& traj, const UdnsConfig& config) {
  std::vector<TokenSeq> states;
  states.reserve(config.K + 1);
  TokenSeq x = traj.initial;
  states.push_back(x);
  std::size_t j = 0;
  for (int k = 0; k < config.K; ++k) {
    if (j < traj.jumps.size() && traj.jumps[j].step == k) {
      x[traj.jumps[j].site] = traj.jumps[j].token;
      ++j;
    }
    states.push_back(x);
  }
  return states;
}

PathReplay replay_unif(ScoreFunction& score, const RewardFn& reward, const UdnsConfig& config,
                       std::span<const UdnsTrajectory> trajs) {
  const int D = score.sites();
  const int N = score.vocab();
  const std::size_t DN = static_cast<std::size_t>(D) * N;
  const double ref_rate = static_cast<double>(D) * (N - 1);

  PathReplay out;
  out.W.assign(trajs.size(), 0.0);
  out.calls.reserve(trajs.size() * config.K);
  // jump_of[c] = flat (d, n) index of the jump made at call c, or -1 for a stay.
  std::vector<int> jump_of;
  std::vector<int> step_of;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto states = trajectory_states(trajs[i], config);
    std::size_t j = 0;
    for (int k = 0; k < config.K; ++k) {
      PathCall call;
      call.traj = i;
      call.state = states[k];
      call.t = config.time(k);
      int jump = -1;
      if (j < trajs[i].jumps.size() && trajs[i].jumps[j].step == k) {
        jump = trajs[i].jumps[j].site * N + trajs[i].jumps[j].token - 1;
        ++j;
      }
      out.calls.push_back(std::move(call));
      jump_of.push_back(jump);
      step_of.push_back(k);
    }
  }

  std::vector<const MaskedSeq*> states;
  std::vector<double> times;
  states.reserve(out.calls.size());
  times.reserve(out.calls.size());
  for (const auto& c : out.calls) {
    states.push_back(&c.state);
    times.push_back(c.t);
  }
  std::vector<double> s;
  evaluate_chunked(score, states, times, s);

  for (std::size_t c = 0; c < out.calls.size(); ++c) {
    auto& call = out.calls[c];
    const double* row = &s[c * DN];
    if (jump_of[c] >= 0) {
      const double sv = row[jump_of[c]];
      out.W[call.traj] -= std::log(sv);
      call.dW_ds.push_back({jump_of[c], -1.0 / sv});
    } else {
      const double cs = config.jump_scale(step_of[c], N);
      const double S = off_diagonal_sum(row, call.state, N);
      out.W[call.traj] -= std::log((1.0 - cs * S) / (1.0 - cs * ref_rate));
      const double g = cs / (1.0 - cs * S);
      call.dW_ds.reserve(D * (N - 1));
      for (int d = 0; d < D; ++d)
        for (int n = 0; n < N; ++n)
          if (n + 1 != call.state[d]) call.dW_ds.push_back({d * N + n, g});
    }
  }
  for (std::size_t i = 0; i < trajs.size(); ++i) out.W[i] += reward(trajs[i].final);
  return out;
}

std::vector<WeightedSample> to_weighted(std::span<const UdnsTrajectory> trajs) {
  std::vector<WeightedSample> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back({t.final, t.log_weight});
  return out;
}

TokenSeq corrupt(std::span<const Token> x, double t, int N, Rng& rng) {
  if (!(t > 0.0 && t <= 1.0)) throw_config("corrupt requires t in (0, 1]");
  TokenSeq out(x.begin(), x.end());
  for (auto& tok : out)
    if (rng.uniform() >= t) tok = static_cast<Token>(1 + rng.below(N));
  return out;
}

LossOutput wdce_unif(std::span<const WeightedSample> buffer, ScoreFunction& score, const UdnsConfig& config, int R,
                     Rng& rng) {
  if (buffer.empty()) throw_config("wdce_unif needs a nonempty buffer");
  if (R < 1) throw_config("wdce_unif needs R >= 1");
  const int D = score.sites();
  const int N = score.vocab();
  const std::size_t DN = static_cast<std::size_t>(D) * N;
  std::vector<double> logw(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) logw[i] = buffer[i].log_weight;
  const auto omega = softmax_weights(logw);

  const std::uint64_t base = rng();
  std::vector<TokenSeq> xt;
  std::vector<double> times;
  std::vector<std::size_t> sample_of;
  xt.reserve(buffer.size() * R);
  for (std::size_t i = 0; i < buffer.size(); ++i)
    for (int r = 0; r < R; ++r) {
      Rng local(derive_key(base, i * static_cast<std::uint64_t>(R) + r));
      const double t = config.eps + (1.0 - config.eps) * (1.0 - local.uniform());
      xt.push_back(corrupt(buffer[i].final, t, N, local));
      times.push_back(t);
      sample_of.push_back(i);
    }

  std::vector<const MaskedSeq*> states;
  states.reserve(xt.size());
  for (const auto& x : xt) states.push_back(&x);
  std::vector<double> s;
  evaluate_chunked(score, states, times, s);

  LossOutput out;
  out.calls.reserve(xt.size());
  for (std::size_t k = 0; k < xt.size(); ++k) {
    const double t = times[k];
    const TokenSeq& x = xt[k];
    const TokenSeq& clean = buffer[sample_of[k]].final;
    const double coef = omega[sample_of[k]] / (t * N * R);  // omega gamma(t) / (N R)
    const double noise = (1.0 - t) / N;
    AdjointCall call{x, t, {}};
    call.adjoint.reserve(D * (N - 1));
    for (int d = 0; d < D; ++d) {
      const double denom = t * (clean[d] == x[d]) + noise;
      for (int n = 0; n < N; ++n) {
        if (n + 1 == x[d]) continue;
        const double ratio = (t * (clean[d] == n + 1) + noise) / denom;
        const double sv = s[k * DN + d * N + n];
        out.value += coef * (sv - ratio * std::log(sv));
        call.adjoint.push_back({d * N + n, coef * (1.0 - ratio / sv)});
      }
    }
    out.calls.push_back(std::move(call));
  }
  if (!std::isfinite(out.value)) throw_numeric("non-finite wdce_unif loss");
  return out;
}

}  // namespace mdns
