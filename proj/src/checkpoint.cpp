#include "mdns/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"

namespace mdns {
namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw_config("truncated checkpoint " + path);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_floats(std::ostream& os, std::span<const float> v) {
  for (float f : v) put_u32(os, std::bit_cast<std::uint32_t>(f));
}

void get_floats(std::istream& is, std::span<float> v, const std::string& path) {
  for (float& f : v) f = std::bit_cast<float>(get_u32(is, path));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const ScoreModel& m = ckpt.model;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : m.tensors()) params.push_back({{"name", t.name}, {"shape", t.shape}});
  nlohmann::json sampler{{"family", to_string(ckpt.sampler)}};
  if (ckpt.sampler == SamplerFamily::Udns) sampler["udns"] = ckpt.udns;
  const nlohmann::json header{{"arch", m.arch()},
                              {"spec", m.spec()},
                              {"step", ckpt.step},
                              {"rng_state_digest", ckpt.rng_state_digest},
                              {"params", params},
                              {"has_ema", ckpt.ema.has_value()},
                              {"sampler", sampler},
                              {"precondition_beta", m.precondition_beta()}};
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw_config("cannot write checkpoint " + path);
  os.write("MDNS", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_floats(os, m.params());
  if (ckpt.ema) {
    if (ckpt.ema->param_count() != m.param_count()) throw_config("EMA copy does not match the model layout");
    put_floats(os, ckpt.ema->params());
  }
  if (!os) throw_config("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_config("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MDNS", 4) != 0) throw_config(path + " is not an MDNS checkpoint");
  const std::uint32_t version = get_u32(is, path);
  if (version != kCheckpointVersion)
    throw_config("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const std::uint32_t len = get_u32(is, path);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw_config("truncated checkpoint header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw_config("malformed checkpoint header in " + path + ": " + e.what());
  }
  try {
    const auto spec = header.at("spec").get<ModelSpec>();
    const auto arch = header.at("arch").get<ScoreArch>();
    Checkpoint ck{ScoreModel(spec, arch, 0), std::nullopt, header.at("step").get<int>(),
                  header.value("rng_state_digest", std::uint64_t{0}), SamplerFamily::Mdns, UdnsConfig{}};
    const auto& sampler = header.at("sampler");
    ck.sampler = sampler_family_from_string(sampler.at("family").get<std::string>());
    if (sampler.contains("udns")) ck.udns = sampler.at("udns").get<UdnsConfig>();

    const auto& declared = header.at("params");
    const auto& tensors = ck.model.tensors();
    if (declared.size() != tensors.size()) throw_config("checkpoint tensor list does not match the architecture");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (declared[i].at("name").get<std::string>() != tensors[i].name ||
          declared[i].at("shape").get<std::vector<int>>() != tensors[i].shape)
        throw_config("checkpoint tensor " + std::to_string(i) + " does not match the architecture");
    }
    get_floats(is, ck.model.mutable_params(), path);
    ck.model.set_precondition_beta(header.value("precondition_beta", spec.beta));
    if (header.at("has_ema").get<bool>()) {
      ck.ema.emplace(ck.model);
      get_floats(is, ck.ema->mutable_params(), path);
    }
    is.peek();
    if (!is.eof()) throw_config("trailing bytes in checkpoint " + path);
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw_config("invalid checkpoint header in " + path + ": " + e.what());
  }
}

}  // namespace mdns
