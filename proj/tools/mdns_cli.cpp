// mdns: train, sample, evaluate and reproduce masked diffusion neural samplers
// on lattice spin models.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mdns/checkpoint.hpp"
#include "mdns/config.hpp"
#include "mdns/error.hpp"
#include "mdns/exact.hpp"
#include "mdns/experiments.hpp"
#include "mdns/kernels.hpp"
#include "mdns/mcmc.hpp"
#include "mdns/metrics.hpp"
#include "mdns/sample_io.hpp"
#include "mdns/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SpecArgs {
  std::string file;
  std::string kind = "ising";
  int L = 4;
  int N = 0;
  double J = 1.0;
  double h = 0.0;
  double beta = 0.28;

  void add(CLI::App* app) {
    app->add_option("--spec", file, "Model spec JSON file (overrides the flags below)");
    app->add_option("--kind", kind, "ising or potts")->capture_default_str();
    app->add_option("--L", L, "Lattice side")->capture_default_str();
    app->add_option("--N", N, "Tokens per site (Potts q); defaults to 2 for Ising, 3 for Potts");
    app->add_option("--J", J, "Coupling")->capture_default_str();
    app->add_option("--field", h, "External field h (Ising only)")->capture_default_str();
    app->add_option("--beta", beta, "Inverse temperature")->capture_default_str();
  }

  mdns::ModelSpec resolve() const {
    if (!file.empty()) {
      std::ifstream is(file);
      if (!is) mdns::throw_config("cannot open spec " + file);
      const auto j = json::parse(is, nullptr, false);
      if (j.is_discarded()) mdns::throw_config("spec " + file + " is not valid JSON");
      return j.get<mdns::ModelSpec>();
    }
    mdns::ModelSpec s;
    s.kind = mdns::model_kind_from_string(kind);
    s.L = L;
    s.N = N > 0 ? N : (s.kind == mdns::ModelKind::Ising ? 2 : 3);
    s.J = J;
    s.h = h;
    s.beta = beta;
    s.validate();
    return s;
  }
};

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) mdns::throw_config("cannot write " + path);
  os << j.dump(2) << '\n';
}

std::string under(const std::string& dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(dir) / p).string();
}

mdns::SampleDump to_dump(const mdns::ModelSpec& spec, std::vector<mdns::TokenSeq> samples,
                         std::vector<double> weights = {}) {
  mdns::SampleDump d;
  d.N = spec.N;
  d.D = spec.sites();
  d.samples = std::move(samples);
  d.log_weights = std::move(weights);
  return d;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
  const mdns::RunConfig cfg = mdns::load_run_config(a.config, a.overrides);
  fs::create_directories(cfg.io.out_dir);
  write_json(under(cfg.io.out_dir, "resolved_config.json"), mdns::to_json(cfg));

  std::optional<mdns::ScoreModel> model;
  if (!cfg.io.init_checkpoint.empty()) {
    auto ck = mdns::load_checkpoint(cfg.io.init_checkpoint);
    if (!(ck.model.arch() == cfg.arch) || ck.model.spec().sites() != cfg.spec.sites() ||
        ck.model.spec().N != cfg.spec.N)
      mdns::throw_config("init checkpoint does not match the configured arch and spec");
    model.emplace(cfg.spec, cfg.arch, cfg.train.seed);
    auto dst = model->mutable_params();
    const auto src = ck.model.params();
    std::copy(src.begin(), src.end(), dst.begin());
  } else {
    model.emplace(cfg.spec, cfg.arch, cfg.train.seed);
  }

  std::ofstream metrics(under(cfg.io.out_dir, "metrics.ndjson"));
  if (!metrics) mdns::throw_config("cannot write metrics log in " + cfg.io.out_dir);
  const std::string ckpt_path = under(cfg.io.out_dir, cfg.io.checkpoint);
  const std::uint64_t digest = mdns::stream_key(cfg.train.seed, "train/sample");
  mdns::TrainSinks sinks;
  sinks.metrics = &metrics;
  sinks.on_checkpoint = [&](int step, const mdns::ScoreModel& m, const mdns::ScoreModel& ema) {
    mdns::save_checkpoint(ckpt_path, {m, ema, step, digest, cfg.train.sampler, cfg.train.udns});
    std::cerr << "checkpoint at step " << step << " -> " << ckpt_path << '\n';
  };
  sinks.on_step = [&](const mdns::StepRecord& r) {
    if ((r.step + 1) % 100 == 0)
      std::cerr << "step " << r.step + 1 << " loss " << r.loss << " ess " << r.ess << '\n';
  };
  const auto result = mdns::train(cfg.spec, std::move(*model), cfg.train, sinks);

  json summary{{"steps", result.optimizer_steps},
               {"sampler_calls", result.sampler_calls},
               {"trailing_ess", mdns::trailing_ess(result.log)},
               {"checkpoint", ckpt_path}};
  write_json(under(cfg.io.out_dir, "summary.json"), summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint;
  std::size_t count = 1024;
  std::uint64_t seed = 0;
  std::string out = "samples.txt";
  bool raw = false;
  int median_groups = 0;
};

int cmd_sample(const SampleArgs& a) {
  auto ck = mdns::load_checkpoint(a.checkpoint);
  mdns::ScoreModel& net = (!a.raw && ck.ema) ? *ck.ema : ck.model;
  const auto spec = net.spec();
  auto res = mdns::evaluate_sampler(net, spec, ck.sampler, ck.udns, a.count, a.seed, nullptr, a.median_groups, true);
  mdns::write_samples_file(a.out, to_dump(spec, std::move(res.samples), std::move(res.log_weights)));
  std::cout << json(res.report).dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string samples;
  std::string truth;
  SpecArgs spec;
  bool spec_given = false;
  std::size_t count = std::size_t{1} << 18;
  std::uint64_t seed = 1;
  int median_groups = 0;
  bool raw = false;
  std::string out;
  std::string corr_csv;
};

int cmd_eval(EvalArgs& a) {
  if (a.checkpoint.empty() == a.samples.empty()) mdns::throw_config("give exactly one of --checkpoint or --samples");
  json report;
  std::vector<mdns::TokenSeq> samples;
  std::optional<mdns::ModelSpec> spec;
  if (a.spec_given) spec = a.spec.resolve();

  std::optional<mdns::ExactTable> table;
  auto exact_for = [&](const mdns::ModelSpec& s) -> const mdns::ExactTable* {
    const std::uint64_t n = mdns::state_count(s);
    if (n == 0 || n > mdns::kDefaultStateCap) return nullptr;
    table = mdns::build_exact(s);
    return &*table;
  };

  if (!a.checkpoint.empty()) {
    auto ck = mdns::load_checkpoint(a.checkpoint);
    mdns::ScoreModel& net = (!a.raw && ck.ema) ? *ck.ema : ck.model;
    if (!spec) spec = net.spec();
    if (spec->sites() != net.sites() || spec->N != net.vocab())
      mdns::throw_config("spec does not match the checkpoint dimensions");
    auto res = mdns::evaluate_sampler(net, *spec, ck.sampler, ck.udns, a.count, a.seed, exact_for(*spec),
                                      a.median_groups, !a.truth.empty() || !a.corr_csv.empty());
    report["sampler"] = res.report;
    samples = std::move(res.samples);
  } else {
    auto dump = mdns::read_samples_file(a.samples);
    if (!spec) mdns::throw_config("evaluating a sample dump needs a spec");
    if (dump.D != spec->sites() || dump.N != spec->N) mdns::throw_config("sample dump does not match the spec");
    if (const auto* t = exact_for(*spec)) {
      const auto d = mdns::divergences(mdns::histogram(*t, dump.samples), *t);
      report["divergences"] = {{"tv", d.tv}, {"kl", d.kl}, {"chi2", d.chi2}};
      report["logZ_exact"] = t->log_Z;
    }
    if (!dump.log_weights.empty()) {
      report["ess"] = mdns::ess(dump.log_weights);
      report["logZ_hat"] = mdns::estimate_logZ(dump.log_weights);
    }
    samples = std::move(dump.samples);
  }
  report["spec"] = *spec;
  if (!samples.empty() && (!a.truth.empty() || !a.corr_csv.empty())) {
    const auto obs = mdns::observables(*spec, samples);
    report["observables"] = obs;
    if (!a.corr_csv.empty()) {
      std::ofstream os(a.corr_csv);
      if (!os) mdns::throw_config("cannot write " + a.corr_csv);
      mdns::write_corr_csv(obs, os);
    }
    if (!a.truth.empty()) {
      const auto truth = mdns::read_samples_file(a.truth);
      if (truth.D != spec->sites() || truth.N != spec->N) mdns::throw_config("truth dump does not match the spec");
      report["observable_errors"] = mdns::observable_errors(obs, mdns::observables(*spec, truth.samples));
    }
  }
  write_json(a.out, report);
  return 0;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
  SpecArgs spec;
  std::string algo = "mh";
  mdns::ChainConfig chain;
  std::string unit = "sweep";
  std::string out = "baseline.txt";
};

int cmd_baseline(const BaselineArgs& a) {
  const auto spec = a.spec.resolve();
  mdns::ChainConfig c = a.chain;
  json unit_json = {{"unit", a.unit}};
  mdns::ChainConfig parsed;
  mdns::from_json(unit_json, parsed);
  c.unit = parsed.unit;
  auto samples = mdns::run_chain(spec, mdns::mcmc_algo_from_string(a.algo), c);
  const std::size_t n = samples.size();
  mdns::write_samples_file(a.out, to_dump(spec, std::move(samples)));
  std::cout << json{{"algo", a.algo}, {"samples", n}, {"chain", c}, {"out", a.out}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- oracle

struct OracleArgs {
  SpecArgs spec;
  std::string pi_csv;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string out = "exact_samples.txt";
};

int cmd_oracle(const OracleArgs& a) {
  const auto spec = a.spec.resolve();
  const auto table = mdns::build_exact(spec);
  json report{{"spec", spec}, {"states", table.size()}, {"log_Z", table.log_Z}};
  if (!a.pi_csv.empty()) {
    std::ofstream os(a.pi_csv);
    if (!os) mdns::throw_config("cannot write " + a.pi_csv);
    os << "index,energy,prob\n";
    os.precision(17);
    const auto p = table.probabilities();
    for (std::uint64_t i = 0; i < table.size(); ++i)
      os << i << ',' << mdns::lattice::energy(spec, mdns::decode_state(spec, i)) << ',' << p[i] << '\n';
  }
  if (a.samples > 0) {
    mdns::Rng rng = mdns::stream(a.seed, "oracle/sample", 0);
    mdns::write_samples_file(a.out, to_dump(spec, mdns::exact_sample(table, rng, a.samples)));
    report["samples_out"] = a.out;
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- repro

struct ReproArgs {
  std::string table;
  mdns::ReproOptions options;
  std::string out;
};

int cmd_repro(const ReproArgs& a) {
  mdns::ReproOptions opt = a.options;
  opt.progress = &std::cerr;
  const auto rows = mdns::run_repro(a.table, opt);
  mdns::write_repro_table(std::cout, rows);
  if (!a.out.empty()) write_json(a.out, json{{"table", a.table}, {"rows", rows}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked diffusion neural samplers for lattice spin models"};
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "Force the dense kernel ISA (scalar, avx2, avx512)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a score model from a JSON run config");
  t->add_option("--config", train.config, "Run config JSON (defaults when omitted)");
  t->add_option("--set", train.overrides, "Dotted override, e.g. --set train.lr=3e-4")->take_all();

  SampleArgs sample;
  auto* s = app.add_subcommand("sample", "Draw weighted samples from a checkpoint");
  s->add_option("--checkpoint", sample.checkpoint)->required();
  s->add_option("--count", sample.count)->capture_default_str();
  s->add_option("--seed", sample.seed)->capture_default_str();
  s->add_option("--out", sample.out)->capture_default_str();
  s->add_flag("--raw", sample.raw, "Use the raw parameters instead of the EMA copy");
  s->add_option("--median-groups", sample.median_groups, "Median-of-means groups for log Z");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Metrics report for a checkpoint or a sample dump");
  e->add_option("--checkpoint", eval.checkpoint);
  e->add_option("--samples", eval.samples, "Sample dump to evaluate");
  e->add_option("--truth", eval.truth, "Reference dump for magnetisation and correlation errors");
  eval.spec.add(e);
  e->add_option("--count", eval.count, "Samples drawn from a checkpoint")->capture_default_str();
  e->add_option("--seed", eval.seed)->capture_default_str();
  e->add_option("--median-groups", eval.median_groups);
  e->add_flag("--raw", eval.raw, "Use the raw parameters instead of the EMA copy");
  e->add_option("--out", eval.out, "Report path (stdout when omitted)");
  e->add_option("--corr-csv", eval.corr_csv, "Write the correlation-vs-distance curve");

  BaselineArgs base;
  auto* b = app.add_subcommand("baseline", "MCMC baseline samples (mh or sw)");
  base.spec.add(b);
  b->add_option("--algo", base.algo)->capture_default_str();
  b->add_option("--chains", base.chain.chains)->capture_default_str();
  b->add_option("--burnin", base.chain.burnin)->capture_default_str();
  b->add_option("--thin", base.chain.thin)->capture_default_str();
  b->add_option("--rounds", base.chain.rounds)->capture_default_str();
  b->add_option("--seed", base.chain.seed)->capture_default_str();
  b->add_option("--unit", base.unit, "MH iteration unit: sweep or proposal")->capture_default_str();
  b->add_option("--out", base.out)->capture_default_str();

  OracleArgs oracle;
  auto* o = app.add_subcommand("oracle", "Exact partition function, distribution and samples");
  oracle.spec.add(o);
  o->add_option("--pi-csv", oracle.pi_csv, "Write index,energy,prob for every state");
  o->add_option("--samples", oracle.samples, "Number of exact samples to draw");
  o->add_option("--seed", oracle.seed);
  o->add_option("--out", oracle.out)->capture_default_str();

  ReproArgs repro;
  auto* r = app.add_subcommand("repro", "Train and evaluate one of the 4x4 result tables");
  r->add_option("table", repro.table)->required()->check(CLI::IsMember(mdns::repro_tables()));
  r->add_option("--steps", repro.options.steps, "Override the table's step count");
  r->add_option("--eval-samples", repro.options.eval_samples)->capture_default_str();
  r->add_option("--seed", repro.options.seed)->capture_default_str();
  r->add_option("--only", repro.options.only, "Run only these row labels");
  r->add_option("--out", repro.out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(mdns::ErrorKind::Config);
  }

  try {
    if (!isa.empty()) mdns::kernels::force_isa(mdns::kernels::isa_from_string(isa));
    eval.spec_given = !eval.spec.file.empty() || e->count("--kind") || e->count("--L") || e->count("--beta") ||
                      e->count("--N") || e->count("--J") || e->count("--field");
    if (*t) return cmd_train(train);
    if (*s) return cmd_sample(sample);
    if (*e) return cmd_eval(eval);
    if (*b) return cmd_baseline(base);
    if (*o) return cmd_oracle(oracle);
    if (*r) return cmd_repro(repro);
  } catch (const mdns::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return err.exit_code();
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(mdns::ErrorKind::Config);
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(mdns::ErrorKind::Config);
  }
  return 0;
}
