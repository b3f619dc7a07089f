#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mdns/score.hpp"
#include "mdns/trainer.hpp"
#include "mdns/uniform_sampler.hpp"

namespace mdns {

/// Binary layout: "MDNS", u32 LE version, u32 LE header length, a UTF-8 JSON
/// header, then every parameter tensor as little-endian float32 in header
/// order, followed by the EMA copy when the header sets has_ema.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ScoreModel model;
  std::optional<ScoreModel> ema;
  int step = 0;
  std::uint64_t rng_state_digest = 0;
  SamplerFamily sampler = SamplerFamily::Mdns;
  UdnsConfig udns;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mdns
