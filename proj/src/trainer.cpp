#include "mdns/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"
#include "mdns/masked_sampler.hpp"
#include "mdns/metrics.hpp"

namespace mdns {
namespace {

std::string weight_summary(std::span<const double> W) {
  if (W.empty()) return "no weights";
  const auto [lo, hi] = std::minmax_element(W.begin(), W.end());
  double mean = 0.0;
  std::size_t bad = 0;
  for (double w : W) {
    if (!std::isfinite(w)) ++bad;
    mean += w;
  }
  return "weights min " + std::to_string(*lo) + ", max " + std::to_string(*hi) + ", mean " +
         std::to_string(mean / W.size()) + ", non-finite " + std::to_string(bad);
}

}  // namespace

std::string to_string(SamplerFamily f) { return f == SamplerFamily::Mdns ? "mdns" : "udns"; }

SamplerFamily sampler_family_from_string(const std::string& name) {
  if (name == "mdns") return SamplerFamily::Mdns;
  if (name == "udns") return SamplerFamily::Udns;
  throw_config("unknown sampler family '" + name + "' (expected mdns or udns)");
}

void TrainConfig::validate() const {
  if (steps < 1) throw_config("train.steps must be >= 1");
  if (batch < 1) throw_config("train.batch must be >= 1");
  if (objective == Objective::Lv && batch < 2) throw_config("lv needs train.batch >= 2");
  if (objective == Objective::Wdce && (wdce.R < 1 || wdce.resample_every < 1))
    throw_config("wdce needs R >= 1 and resample_every >= 1");
  if (sampler == SamplerFamily::Udns && objective == Objective::Ce)
    throw_config("the ce objective is not supported for the uniform sampler");
  if (!(lr > 0.0)) throw_config("train.lr must be positive");
  if (ema_decay < 0.0 || ema_decay > 1.0) throw_config("train.ema_decay must lie in [0, 1]");
  if (warmup.enabled && (warmup.warm_steps < 0 || !(warmup.beta_warm > 0.0)))
    throw_config("warm-up needs warm_steps >= 0 and beta_warm > 0");
  if (eval_every < 0) throw_config("train.eval_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"sampler", to_string(c.sampler)},
      {"udns", c.udns},
      {"objective", to_string(c.objective)},
      {"steps", c.steps},
      {"batch", c.batch},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"ema_decay", c.ema_decay},
      {"baseline", to_string(c.baseline)},
      {"clip_norm", c.clip_norm},
      {"wdce", {{"R", c.wdce.R}, {"resample_every", c.wdce.resample_every}, {"w", to_string(c.wdce.w)}}},
      {"warmup",
       {{"enabled", c.warmup.enabled}, {"beta_warm", c.warmup.beta_warm}, {"warm_steps", c.warmup.warm_steps}}},
      {"eval_every", c.eval_every},
      {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    c.sampler = sampler_family_from_string(j.value("sampler", to_string(c.sampler)));
    if (j.contains("udns")) c.udns = j.at("udns").get<UdnsConfig>();
    c.objective = objective_from_string(j.value("objective", to_string(c.objective)));
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.baseline = baseline_from_string(j.value("baseline", to_string(c.baseline)));
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("wdce")) {
      const auto& w = j.at("wdce");
      c.wdce.R = w.value("R", c.wdce.R);
      c.wdce.resample_every = w.value("resample_every", c.wdce.resample_every);
      c.wdce.w = wscheme_from_string(w.value("w", to_string(c.wdce.w)));
    }
    if (j.contains("warmup")) {
      const auto& w = j.at("warmup");
      c.warmup.enabled = w.value("enabled", c.warmup.enabled);
      c.warmup.beta_warm = w.value("beta_warm", c.warmup.beta_warm);
      c.warmup.warm_steps = w.value("warm_steps", c.warmup.warm_steps);
    }
    c.eval_every = j.value("eval_every", c.eval_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw_config(std::string("invalid train config: ") + e.what());
  }
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state, double lr, double wd,
               double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) throw_config("adam_step: parameter and gradient sizes differ");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    double p = static_cast<double>(params[i]) * (1.0 - lr * wd);
    p -= lr * mhat / (std::sqrt(vhat) + eps);
    params[i] = static_cast<float>(p);
  }
}

void ema_update(std::span<double> ema, std::span<const float> params, double decay) {
  if (ema.size() != params.size()) throw_config("ema_update: sizes differ");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

double ema_effective_decay(double decay, std::int64_t step) {
  return std::min(decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
}

double warmup_schedule(const TrainConfig& config, double target_beta, int step) {
  if (!config.warmup.enabled) return target_beta;
  return step < config.warmup.warm_steps ? config.warmup.beta_warm : target_beta;
}

void to_json(nlohmann::json& j, const StepRecord& r) {
  j = nlohmann::json{{"step", r.step},
                     {"loss", r.loss},
                     {"ess", r.ess},
                     {"logZ_hat", r.logZ_hat},
                     {"wallclock_ms", r.wallclock_ms},
                     {"beta", r.beta}};
}

TrainResult train(const ModelSpec& spec, ScoreModel model, const TrainConfig& config, const TrainSinks& sinks) {
  config.validate();
  spec.validate();
  if (model.sites() != spec.sites() || model.vocab() != spec.N)
    throw_config("score model dimensions do not match the model spec");
  const bool udns = config.sampler == SamplerFamily::Udns;
  if (udns != model.time_conditioned())
    throw_config(udns ? "the uniform sampler needs a time-conditioned score model"
                      : "the masked sampler needs a score model without time conditioning");
  if (udns) config.udns.validate(spec.sites(), spec.N);

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{model, model, {}, 0, 0, {}};
  ScoreModel& net = result.model;
  std::vector<double> ema(net.params().begin(), net.params().end());
  AdamState adam;
  GradBuffer grads = net.make_grads();

  std::vector<WeightedSample> buffer;
  double buffer_ess = 0.0, buffer_logZ = 0.0;

  auto export_ema = [&]() {
    auto p = result.ema.mutable_params();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(ema[i]);
    result.ema.set_precondition_beta(net.precondition_beta());
  };

  for (int step = 0; step < config.steps; ++step) {
    const double beta = warmup_schedule(config, spec.beta, step);
    ModelSpec active = spec;
    active.beta = beta;
    net.set_precondition_beta(beta);
    const RewardFn reward = lattice_reward(active);

    StepRecord rec;
    rec.step = step;
    rec.beta = beta;
    LossOutput loss;
    std::vector<double> detached;
    try {
      if (config.objective != Objective::Wdce) {
        Rng rng = stream(config.seed, "train/sample", static_cast<std::uint64_t>(step));
        PathReplay rp;
        if (udns) {
          const auto trajs = sample_trajectories_unif(net, reward, config.udns, config.batch, rng);
          rp = replay_unif(net, reward, config.udns, trajs);
        } else {
          const auto recs = sample_trajectories(net, reward, config.batch, rng);
          rp = replay(net, reward, recs);
        }
        ++result.sampler_calls;
        detached = rp.W;
        loss = path_loss(config.objective, rp, detached, config.baseline);
        rec.ess = ess(detached);
        rec.logZ_hat = estimate_logZ(detached);
      } else {
        if (step % config.wdce.resample_every == 0) {
          Rng rng = stream(config.seed, "train/buffer", static_cast<std::uint64_t>(step));
          if (udns)
            buffer = to_weighted(sample_trajectories_unif(net, reward, config.udns, config.batch, rng));
          else
            buffer = to_weighted(sample_trajectories(net, reward, config.batch, rng));
          ++result.sampler_calls;
          result.buffer_refresh_steps.push_back(step);
          std::vector<double> w(buffer.size());
          for (std::size_t i = 0; i < buffer.size(); ++i) w[i] = buffer[i].log_weight;
          buffer_ess = ess(w);
          buffer_logZ = estimate_logZ(w);
          detached = std::move(w);
        }
        Rng rng = stream(config.seed, "train/wdce", static_cast<std::uint64_t>(step));
        loss = udns ? wdce_unif(buffer, net, config.udns, config.wdce.R, rng)
                    : wdce(buffer, net, config.wdce.R, config.wdce.w, rng);
        rec.ess = buffer_ess;
        rec.logZ_hat = buffer_logZ;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
      throw_numeric(std::string(e.what()) + " at step " + std::to_string(step));
    }
    rec.loss = loss.value;
    if (!std::isfinite(loss.value))
      throw_numeric("non-finite loss at step " + std::to_string(step) + " (" + weight_summary(detached) + ")");

    std::fill(grads.begin(), grads.end(), 0.0);
    backprop(net, loss, grads);
    double norm2 = 0.0;
    for (double g : grads) norm2 += g * g;
    if (!std::isfinite(norm2))
      throw_numeric("non-finite gradient at step " + std::to_string(step) + " (" + weight_summary(detached) + ")");
    if (config.clip_norm > 0.0 && norm2 > config.clip_norm * config.clip_norm) {
      const double scale = config.clip_norm / std::sqrt(norm2);
      for (double& g : grads) g *= scale;
    }
    adam_step(net.mutable_params(), grads, adam, config.lr, config.weight_decay, config.beta1, config.beta2,
              config.adam_eps);
    ema_update(ema, net.params(), ema_effective_decay(config.ema_decay, step));
    ++result.optimizer_steps;

    rec.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (sinks.metrics) *sinks.metrics << nlohmann::json(rec).dump() << '\n';
    if (sinks.on_step) sinks.on_step(rec);
    const bool last = step + 1 == config.steps;
    if (sinks.on_checkpoint && (last || (config.eval_every > 0 && (step + 1) % config.eval_every == 0))) {
      export_ema();
      sinks.on_checkpoint(step + 1, net, result.ema);
    }
  }
  export_ema();
  return result;
}

double trailing_ess(const std::vector<StepRecord>& log, std::size_t window) {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  double s = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) s += log[i].ess;
  return s / static_cast<double>(n);
}

}  // namespace mdns
