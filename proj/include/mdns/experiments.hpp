#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/exact.hpp"
#include "mdns/lattice.hpp"
#include "mdns/score.hpp"
#include "mdns/trainer.hpp"

namespace mdns {

struct EvalReport {
  std::size_t samples = 0;
  double ess = 0.0;
  double logZ_hat = 0.0;
  /// Present when an exact table was supplied.
  std::optional<double> logZ_exact;
  std::optional<double> path_kl;
  std::optional<Divergences> div;
};

void to_json(nlohmann::json& j, const EvalReport& r);

struct EvalResult {
  EvalReport report;
  std::vector<TokenSeq> samples;  // filled when keep_samples is set
  std::vector<double> log_weights;
};

/// Draws `count` weighted samples from the sampler family in chunks, then
/// reports ESS, log Z (median of `median_groups` group estimates when
/// positive) and, given `table`, path-KL and divergences of the histogram.
EvalResult evaluate_sampler(ScoreFunction& score, const ModelSpec& spec, SamplerFamily family, const UdnsConfig& udns,
                            std::size_t count, std::uint64_t seed, const ExactTable* table = nullptr,
                            int median_groups = 0, bool keep_samples = false);

struct ReproRun {
  std::string label;
  ModelSpec spec;
  ScoreArch arch;
  TrainConfig train;
};

/// Table names: ising4_high, ising4_crit, ising4_low_warmup, potts3, udns4.
std::vector<std::string> repro_tables();
std::vector<ReproRun> repro_runs(const std::string& table);

struct ReproOptions {
  int steps = 0;  // 0 keeps the table's step count
  std::size_t eval_samples = std::size_t{1} << 18;
  std::uint64_t seed = 0;
  std::vector<std::string> only;  // restrict to these labels
  std::ostream* progress = nullptr;
};

struct ReproRow {
  std::string label;
  double train_ess = 0.0;  // trailing-100-step batch ESS
  double train_seconds = 0.0;
  EvalReport eval;
};

void to_json(nlohmann::json& j, const ReproRow& r);

/// Trains the model of one run and evaluates its EMA parameters against the
/// exact oracle.
ReproRow run_one(const ReproRun& run, const ReproOptions& options, const ExactTable& table);

std::vector<ReproRow> run_repro(const std::string& table, const ReproOptions& options);

/// Markdown table with ESS, TV, KL, chi2, path-KL and |d log Z| columns.
void write_repro_table(std::ostream& os, const std::vector<ReproRow>& rows);

}  // namespace mdns
