#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdns/lattice.hpp"
#include "mdns/score.hpp"
#include "mdns/trainer.hpp"

namespace mdns {

struct IoConfig {
  std::string out_dir = "run";
  std::string checkpoint = "model.ckpt";  // relative paths resolve under out_dir
  std::string init_checkpoint;            // optional warm start
};

struct EvalConfig {
  std::size_t num_samples = std::size_t{1} << 18;
  int median_groups = 0;  // 0: plain log-mean-exp for log Z
  bool use_ema = true;
  std::uint64_t seed = 1;
};

/// Everything one run needs. In JSON the sampler family and its settings
/// live under "sampler" rather than inside "train".
struct RunConfig {
  ModelSpec spec = ModelSpec::ising(4, 1.0, 0.1, 0.28);
  ScoreArch arch;
  TrainConfig train;
  IoConfig io;
  EvalConfig eval;

  /// Cross-field checks: the uniform sampler needs a time-conditioned arch
  /// and vice versa; preconditioning needs an Ising spec.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Sets a dotted path such as "train.lr" inside `j`. The value is parsed as
/// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& path, const std::string& value);

/// Layers the file at `path` (empty: none) over the defaults, applies "key=value" overrides and
/// returns the validated config. Unknown keys are rejected.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace mdns
