#include "mdns/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"
#include "mdns/losses.hpp"
#include "mdns/masked_sampler.hpp"
#include "mdns/metrics.hpp"
#include "mdns/uniform_sampler.hpp"

namespace mdns {
namespace {

constexpr std::size_t kEvalChunk = 4096;

TrainConfig base_train(Objective objective, int steps) {
  TrainConfig t;
  t.objective = objective;
  t.steps = steps;
  t.batch = 256;
  t.lr = 1e-3;
  t.ema_decay = 0.9999;
  t.wdce.R = 16;
  t.wdce.resample_every = 10;
  return t;
}

std::vector<ReproRun> ising_rows(const std::string& prefix, const ModelSpec& spec, int steps) {
  std::vector<ReproRun> runs;
  for (Objective o : {Objective::Rerf, Objective::Lv, Objective::Ce, Objective::Wdce})
    runs.push_back({prefix + to_string(o), spec, ScoreArch{}, base_train(o, steps)});
  return runs;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"samples", r.samples}, {"ess", r.ess}, {"logZ_hat", r.logZ_hat}};
  if (r.logZ_exact) {
    j["logZ_exact"] = *r.logZ_exact;
    j["abs_dlogZ"] = std::abs(r.logZ_hat - *r.logZ_exact);
  }
  if (r.path_kl) j["path_kl"] = *r.path_kl;
  if (r.div) j["divergences"] = {{"tv", r.div->tv}, {"kl", r.div->kl}, {"chi2", r.div->chi2}};
}

EvalResult evaluate_sampler(ScoreFunction& score, const ModelSpec& spec, SamplerFamily family, const UdnsConfig& udns,
                            std::size_t count, std::uint64_t seed, const ExactTable* table, int median_groups,
                            bool keep_samples) {
  if (count == 0) throw_config("evaluation needs at least one sample");
  if (median_groups > 0 && count % static_cast<std::size_t>(median_groups) != 0)
    throw_config("eval sample count must be divisible by median_groups");
  EvalResult res;
  std::vector<std::uint64_t> counts;
  if (table) counts.assign(table->size(), 0);
  res.log_weights.reserve(count);
  if (keep_samples) res.samples.reserve(count);
  const RewardFn reward = lattice_reward(spec);

  for (std::size_t start = 0, chunk = 0; start < count; start += kEvalChunk, ++chunk) {
    const std::size_t n = std::min(kEvalChunk, count - start);
    Rng rng = stream(seed, "eval", chunk);
    auto consume = [&](const TokenSeq& x, double w) {
      res.log_weights.push_back(w);
      if (table) ++counts[encode_state(spec, x)];
      if (keep_samples) res.samples.push_back(x);
    };
    if (family == SamplerFamily::Udns) {
      for (const auto& tr : sample_trajectories_unif(score, reward, udns, n, rng)) consume(tr.final, tr.log_weight);
    } else {
      for (const auto& tr : sample_trajectories(score, reward, n, rng)) consume(tr.final, tr.log_weight);
    }
  }

  EvalReport& r = res.report;
  r.samples = count;
  r.ess = ess(res.log_weights);
  r.logZ_hat = median_groups > 0 ? median_logZ(res.log_weights, median_groups) : estimate_logZ(res.log_weights);
  if (table) {
    r.logZ_exact = table->log_Z;
    r.path_kl = path_kl_estimate(res.log_weights, table->log_Z);
    r.div = divergences(counts, *table);
  }
  return res;
}

std::vector<std::string> repro_tables() {
  return {"ising4_high", "ising4_crit", "ising4_low_warmup", "potts3", "udns4"};
}

std::vector<ReproRun> repro_runs(const std::string& table) {
  if (table == "ising4_high") return ising_rows("", ModelSpec::ising(4, 1.0, 0.1, 0.28), 1000);
  if (table == "ising4_crit") return ising_rows("", ModelSpec::ising(4, 1.0, 0.1, 0.4407), 2000);
  if (table == "ising4_low_warmup") {
    auto runs = ising_rows("warmup/", ModelSpec::ising(4, 1.0, 0.1, 0.6), 2000);
    for (auto& r : runs) r.train.warmup = {true, 0.28, 1000};
    auto scratch = runs[1];
    scratch.label = "scratch/lv";
    scratch.train.warmup = {};
    runs.push_back(scratch);
    return runs;
  }
  if (table == "potts3") {
    TrainConfig t = base_train(Objective::Wdce, 5000);
    t.wdce.R = 8;
    return {{"wdce", ModelSpec::potts(3, 3, 1.0, 0.5), ScoreArch{}, t}};
  }
  if (table == "udns4") {
    const ModelSpec spec = ModelSpec::ising(4, 1.0, 0.1, 0.28);
    ScoreArch arch;
    arch.time_conditioned = true;
    ScoreArch pre = arch;
    pre.precondition = true;
    std::vector<ReproRun> runs;
    for (Objective o : {Objective::Lv, Objective::Rerf, Objective::Wdce}) {
      TrainConfig t = base_train(o, 3000);
      t.sampler = SamplerFamily::Udns;
      t.wdce.R = 32;
      runs.push_back({to_string(o), spec, arch, t});
      runs.push_back({to_string(o) + "+precond", spec, pre, t});
    }
    return runs;
  }
  throw_config("unknown repro table '" + table + "'");
}

void to_json(nlohmann::json& j, const ReproRow& r) {
  j = nlohmann::json{{"label", r.label}, {"train_ess", r.train_ess}, {"train_seconds", r.train_seconds},
                     {"eval", r.eval}};
}

ReproRow run_one(const ReproRun& run, const ReproOptions& options, const ExactTable& table) {
  TrainConfig cfg = run.train;
  if (options.steps > 0) {
    if (cfg.warmup.enabled) cfg.warmup.warm_steps = cfg.warmup.warm_steps * options.steps / cfg.steps;
    cfg.steps = options.steps;
  }
  cfg.seed = options.seed;
  ScoreModel model(run.spec, run.arch, options.seed);
  TrainSinks sinks;
  if (options.progress) {
    sinks.on_step = [&](const StepRecord& s) {
      if ((s.step + 1) % 100 == 0 || s.step + 1 == cfg.steps)
        *options.progress << "  [" << run.label << "] step " << s.step + 1 << "/" << cfg.steps << " loss "
                          << fmt(s.loss) << " ess " << fmt(s.ess) << " (" << fmt(s.wallclock_ms / 1000.0) << " s)"
                          << std::endl;
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult trained = train(run.spec, std::move(model), cfg, sinks);
  ReproRow row;
  row.label = run.label;
  row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  row.train_ess = trailing_ess(trained.log, 100);
  row.eval = evaluate_sampler(trained.ema, run.spec, cfg.sampler, cfg.udns, options.eval_samples,
                              derive_key(options.seed, 0xe7a1), &table)
                 .report;
  return row;
}

std::vector<ReproRow> run_repro(const std::string& table, const ReproOptions& options) {
  const auto runs = repro_runs(table);
  std::vector<ReproRow> rows;
  std::optional<ExactTable> exact;
  for (const auto& run : runs) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), run.label) == options.only.end())
      continue;
    if (!exact || !(exact->spec == run.spec)) exact = build_exact(run.spec);
    if (options.progress) *options.progress << "training " << table << "/" << run.label << std::endl;
    rows.push_back(run_one(run, options, *exact));
  }
  if (rows.empty()) throw_config("no rows of table '" + table + "' matched the selection");
  return rows;
}

void write_repro_table(std::ostream& os, const std::vector<ReproRow>& rows) {
  os << "| run | train ESS | eval ESS | TV | KL | chi2 | path-KL | abs err log Z | train s |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    const auto& e = r.eval;
    os << "| " << r.label << " | " << fmt(r.train_ess) << " | " << fmt(e.ess) << " | "
       << (e.div ? fmt(e.div->tv) : "-") << " | " << (e.div ? fmt(e.div->kl) : "-") << " | "
       << (e.div ? fmt(e.div->chi2) : "-") << " | " << (e.path_kl ? fmt(*e.path_kl) : "-") << " | "
       << (e.logZ_exact ? fmt(std::abs(e.logZ_hat - *e.logZ_exact)) : "-") << " | " << fmt(r.train_seconds)
       << " |\n";
  }
}

}  // namespace mdns
