#include "mdns/losses.hpp"

#include <algorithm>
#include <limits>

#include "mdns/error.hpp"

namespace mdns {
namespace {

constexpr std::size_t kBackpropChunk = 1024;

LossOutput from_coefficients(const PathReplay& replay, const std::vector<double>& coef, double value) {
  LossOutput out;
  out.value = value;
  out.calls.reserve(replay.calls.size());
  for (const auto& c : replay.calls) {
    const double k = coef[c.traj];
    if (k == 0.0) continue;
    AdjointCall a{c.state, c.t, {}};
    a.adjoint.reserve(c.dW_ds.size());
    for (const auto& [idx, v] : c.dW_ds) a.adjoint.push_back({idx, k * v});
    out.calls.push_back(std::move(a));
  }
  if (!std::isfinite(out.value)) throw_numeric("non-finite loss value");
  return out;
}

}  // namespace

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Rerf:
      return "rerf";
    case Objective::Lv:
      return "lv";
    case Objective::Ce:
      return "ce";
    default:
      return "wdce";
  }
}

Objective objective_from_string(const std::string& name) {
  if (name == "rerf") return Objective::Rerf;
  if (name == "lv") return Objective::Lv;
  if (name == "ce") return Objective::Ce;
  if (name == "wdce") return Objective::Wdce;
  throw_config("unknown objective '" + name + "' (expected rerf, lv, ce or wdce)");
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::Mean:
      return "mean";
    case Baseline::LogZ:
      return "logZ";
    default:
      return "zero";
  }
}

Baseline baseline_from_string(const std::string& name) {
  if (name == "mean") return Baseline::Mean;
  if (name == "logZ" || name == "logz") return Baseline::LogZ;
  if (name == "zero") return Baseline::Zero;
  throw_config("unknown RERF baseline '" + name + "' (expected mean, logZ or zero)");
}

std::string to_string(WScheme w) { return w == WScheme::One ? "one" : "inv_lambda"; }

WScheme wscheme_from_string(const std::string& name) {
  if (name == "one" || name == "1") return WScheme::One;
  if (name == "inv_lambda" || name == "1/lambda") return WScheme::InvLambda;
  throw_config("unknown WDCE weight scheme '" + name + "' (expected one or inv_lambda)");
}

double estimate_logZ(std::span<const double> W) {
  if (W.empty()) throw_config("estimate_logZ needs at least one weight");
  const double m = *std::max_element(W.begin(), W.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double w : W) s += std::exp(w - m);
  return m + std::log(s / static_cast<double>(W.size()));
}

double median_logZ(std::span<const double> W, std::size_t groups) {
  if (groups == 0 || W.empty() || W.size() % groups != 0)
    throw_config("median_logZ needs a batch size divisible by the group count");
  const std::size_t size = W.size() / groups;
  std::vector<double> est(groups);
  for (std::size_t g = 0; g < groups; ++g) est[g] = estimate_logZ(W.subspan(g * size, size));
  std::sort(est.begin(), est.end());
  return groups % 2 ? est[groups / 2] : 0.5 * (est[groups / 2 - 1] + est[groups / 2]);
}

std::vector<double> softmax_weights(std::span<const double> W) {
  std::vector<double> w(W.size());
  if (W.empty()) return w;
  const double m = *std::max_element(W.begin(), W.end());
  double s = 0.0;
  for (std::size_t i = 0; i < W.size(); ++i) s += (w[i] = std::exp(W[i] - m));
  for (auto& v : w) v /= s;
  return w;
}

LossOutput rerf(const PathReplay& replay, std::span<const double> detached, Baseline baseline) {
  const std::size_t B = replay.W.size();
  if (B == 0 || detached.size() != B) throw_config("rerf needs a nonempty batch with matching detached weights");
  double b = 0.0;
  if (baseline == Baseline::Mean) {
    for (double w : detached) b += w;
    b /= static_cast<double>(B);
  } else if (baseline == Baseline::LogZ) {
    b = estimate_logZ(detached);
  }
  std::vector<double> coef(B);
  double value = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    coef[i] = (detached[i] - b) / static_cast<double>(B);
    value += coef[i] * replay.W[i];
  }
  return from_coefficients(replay, coef, value);
}

LossOutput lv(const PathReplay& replay) {
  const std::size_t B = replay.W.size();
  if (B < 2) throw_config("lv needs a batch of at least 2 trajectories");
  double mean = 0.0;
  for (double w : replay.W) mean += w;
  mean /= static_cast<double>(B);
  std::vector<double> coef(B);
  double value = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double c = replay.W[i] - mean;
    value += c * c;
    coef[i] = 2.0 * c / static_cast<double>(B - 1);
  }
  return from_coefficients(replay, coef, value / static_cast<double>(B - 1));
}

LossOutput ce(const PathReplay& replay, std::span<const double> detached) {
  const std::size_t B = replay.W.size();
  if (B == 0 || detached.size() != B) throw_config("ce needs a nonempty batch with matching detached weights");
  const auto omega = softmax_weights(detached);
  double value = 0.0;
  for (std::size_t i = 0; i < B; ++i) value += omega[i] * replay.W[i];
  return from_coefficients(replay, omega, value);
}

LossOutput path_loss(Objective objective, const PathReplay& replay, std::span<const double> detached,
                     Baseline baseline) {
  switch (objective) {
    case Objective::Rerf:
      return rerf(replay, detached, baseline);
    case Objective::Lv:
      return lv(replay);
    case Objective::Ce:
      return ce(replay, detached);
    default:
      throw_config("wdce is not a path objective");
  }
}

LossOutput wdce(std::span<const WeightedSample> buffer, ScoreFunction& score, int R, WScheme scheme, Rng& rng) {
  if (buffer.empty()) throw_config("wdce needs a nonempty buffer");
  if (R < 1) throw_config("wdce needs R >= 1");
  const int N = score.vocab();
  const std::size_t D = score.sites();
  std::vector<double> logw(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) logw[i] = buffer[i].log_weight;
  const auto omega = softmax_weights(logw);

  const std::uint64_t base = rng();
  struct Replicate {
    std::size_t sample;
    double coef;  // omega w(lambda) / R
    MaskedSeq state;
  };
  std::vector<Replicate> reps;
  reps.reserve(buffer.size() * R);
  for (std::size_t i = 0; i < buffer.size(); ++i)
    for (int r = 0; r < R; ++r) {
      Rng local(derive_key(base, i * static_cast<std::uint64_t>(R) + r));
      const double lambda = local.uniform();
      MaskedSeq x = remask(buffer[i].final, lambda, local);
      if (std::none_of(x.begin(), x.end(), [](Token t) { return t == kMask; })) continue;
      const double w = scheme == WScheme::One ? 1.0 : 1.0 / lambda;
      reps.push_back({i, omega[i] * w / R, std::move(x)});
    }

  std::vector<const MaskedSeq*> states;
  states.reserve(reps.size());
  for (const auto& r : reps) states.push_back(&r.state);
  std::vector<double> s;
  evaluate_chunked(score, states, {}, s);

  LossOutput out;
  out.calls.reserve(reps.size());
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& rep = reps[k];
    AdjointCall call{rep.state, NAN, {}};
    for (std::size_t d = 0; d < D; ++d) {
      if (rep.state[d] != kMask) continue;
      const int idx = static_cast<int>(d) * N + buffer[rep.sample].final[d] - 1;
      const double sv = s[k * D * N + idx];
      out.value -= rep.coef * std::log(sv);
      call.adjoint.push_back({idx, -rep.coef / sv});
    }
    out.calls.push_back(std::move(call));
  }
  if (!std::isfinite(out.value)) throw_numeric("non-finite wdce loss");
  return out;
}

void backprop(ScoreModel& model, const LossOutput& loss, GradBuffer& grads) {
  const std::size_t D = model.sites();
  const std::size_t DN = D * model.vocab();
  const bool timed = model.time_conditioned();
  std::vector<Token> states;
  std::vector<double> times, adjoint;
  for (std::size_t begin = 0; begin < loss.calls.size(); begin += kBackpropChunk) {
    const std::size_t n = std::min(kBackpropChunk, loss.calls.size() - begin);
    states.resize(n * D);
    times.resize(timed ? n : 0);
    adjoint.assign(n * DN, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = loss.calls[begin + i];
      std::copy(c.state.begin(), c.state.end(), states.begin() + i * D);
      if (timed) times[i] = c.t;
      for (const auto& [idx, v] : c.adjoint) adjoint[i * DN + idx] += v;
    }
    model.backward(states.data(), timed ? times.data() : nullptr, n, adjoint.data(), grads);
  }
}

}  // namespace mdns
