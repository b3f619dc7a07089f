#include "mdns/config.hpp"

#include <fstream>

#include "mdns/error.hpp"

namespace mdns {
namespace {

void check_known(const nlohmann::json& given, const nlohmann::json& resolved, const std::string& prefix) {
  if (!given.is_object() || !resolved.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!resolved.contains(key)) throw_config("unknown config key '" + path + "'");
    check_known(value, resolved.at(key), path);
  }
}

}  // namespace

void RunConfig::validate() const {
  spec.validate();
  train.validate();
  const bool udns = train.sampler == SamplerFamily::Udns;
  if (udns != arch.time_conditioned)
    throw_config(udns ? "sampler udns requires arch.time_conditioned = true"
                      : "sampler mdns requires arch.time_conditioned = false");
  if (arch.precondition && spec.kind != ModelKind::Ising) throw_config("arch.precondition requires an Ising spec");
  if (udns) train.udns.validate(spec.sites(), spec.N);
  if (eval.num_samples < 1) throw_config("eval.num_samples must be >= 1");
  if (eval.median_groups < 0) throw_config("eval.median_groups must be >= 0");
  if (io.out_dir.empty()) throw_config("io.out_dir must not be empty");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json train = c.train;
  train.erase("sampler");
  train.erase("udns");
  return nlohmann::json{
      {"spec", c.spec},
      {"sampler", {{"family", to_string(c.train.sampler)}, {"udns", c.train.udns}}},
      {"arch", c.arch},
      {"train", train},
      {"io", {{"out_dir", c.io.out_dir}, {"checkpoint", c.io.checkpoint}, {"init_checkpoint", c.io.init_checkpoint}}},
      {"eval",
       {{"num_samples", c.eval.num_samples},
        {"median_groups", c.eval.median_groups},
        {"use_ema", c.eval.use_ema},
        {"seed", c.eval.seed}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw_config("run config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("spec")) c.spec = j.at("spec").get<ModelSpec>();
    if (j.contains("arch")) c.arch = j.at("arch").get<ScoreArch>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      c.train.sampler = sampler_family_from_string(s.value("family", std::string("mdns")));
      if (s.contains("udns")) c.train.udns = s.at("udns").get<UdnsConfig>();
    }
    if (j.contains("io")) {
      const auto& io = j.at("io");
      c.io.out_dir = io.value("out_dir", c.io.out_dir);
      c.io.checkpoint = io.value("checkpoint", c.io.checkpoint);
      c.io.init_checkpoint = io.value("init_checkpoint", c.io.init_checkpoint);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.num_samples = e.value("num_samples", c.eval.num_samples);
      c.eval.median_groups = e.value("median_groups", c.eval.median_groups);
      c.eval.use_ema = e.value("use_ema", c.eval.use_ema);
      c.eval.seed = e.value("seed", c.eval.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw_config(std::string("invalid run config: ") + e.what());
  }
  if (j.contains("train") && j.at("train").contains("sampler"))
    throw_config("set the sampler family under 'sampler.family', not 'train.sampler'");
  check_known(j, to_json(c), "");
  c.validate();
  return c;
}

void apply_override(nlohmann::json& j, const std::string& path, const std::string& value) {
  if (path.empty()) throw_config("empty override key");
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw_config("malformed override key '" + path + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw_config("override '" + path + "' descends into a non-object");
      *node = nlohmann::json::object();
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? nlohmann::json(value) : std::move(parsed);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = to_json(RunConfig{});
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw_config("cannot open config " + path);
    const auto file = nlohmann::json::parse(is, nullptr, false);
    if (file.is_discarded() || !file.is_object()) throw_config("config " + path + " is not a JSON object");
    j.merge_patch(file);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw_config("override '" + kv + "' is not of the form key=value");
    apply_override(j, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return run_config_from_json(j);
}

}  // namespace mdns
