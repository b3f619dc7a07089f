#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/lattice.hpp"
#include "mdns/losses.hpp"
#include "mdns/score.hpp"
#include "mdns/uniform_sampler.hpp"

namespace mdns {

enum class SamplerFamily { Mdns, Udns };

std::string to_string(SamplerFamily f);
SamplerFamily sampler_family_from_string(const std::string& name);

struct WdceConfig {
  int R = 16;
  int resample_every = 10;
  WScheme w = WScheme::One;
};

struct WarmupConfig {
  bool enabled = false;
  double beta_warm = 0.28;
  int warm_steps = 0;
};

struct TrainConfig {
  SamplerFamily sampler = SamplerFamily::Mdns;
  UdnsConfig udns;
  Objective objective = Objective::Lv;
  int steps = 1000;
  int batch = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.9999;
  Baseline baseline = Baseline::Mean;
  double clip_norm = 0.0;  // 0 disables clipping
  WdceConfig wdce;
  WarmupConfig warmup;
  int eval_every = 0;  // 0: checkpoint only at the end
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

/// AdamW: theta <- theta (1 - lr wd), then the bias-corrected adaptive step.
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state, double lr, double wd,
               double beta1, double beta2, double eps);

/// ema <- decay ema + (1 - decay) params.
void ema_update(std::span<double> ema, std::span<const float> params, double decay);

/// Decay used at update number `step`: min(decay, (1 + step) / (10 + step)).
double ema_effective_decay(double decay, std::int64_t step);

/// beta_warm before warm_steps, the target afterwards.
double warmup_schedule(const TrainConfig& config, double target_beta, int step);

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double ess = 0.0;
  double logZ_hat = 0.0;
  double wallclock_ms = 0.0;
  double beta = 0.0;
};

void to_json(nlohmann::json& j, const StepRecord& r);

struct TrainSinks {
  std::ostream* metrics = nullptr;  // NDJSON, one object per step
  std::function<void(int step, const ScoreModel& model, const ScoreModel& ema)> on_checkpoint;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  ScoreModel model;
  ScoreModel ema;
  std::vector<StepRecord> log;
  int optimizer_steps = 0;
  int sampler_calls = 0;
  std::vector<int> buffer_refresh_steps;  // wdce only
};

/// Trains `model` toward the target `spec`. Throws a numeric error carrying
/// the step index if the loss or gradient becomes non-finite.
TrainResult train(const ModelSpec& spec, ScoreModel model, const TrainConfig& config, const TrainSinks& sinks = {});

/// Mean of the last `window` ESS values of a training log.
double trailing_ess(const std::vector<StepRecord>& log, std::size_t window = 100);

}  // namespace mdns
