#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/lattice.hpp"
#include "mdns/rng.hpp"

namespace mdns {

enum class McmcAlgo { MH, SW };
/// What one MH "iteration" means for burn-in and thinning.
enum class MhUnit { Sweep, Proposal };

std::string to_string(McmcAlgo a);
McmcAlgo mcmc_algo_from_string(const std::string& name);

struct ChainConfig {
  int chains = 1024;
  std::int64_t burnin = 1024;
  std::int64_t thin = 1024;
  std::int64_t rounds = 1024;
  std::uint64_t seed = 0;
  MhUnit unit = MhUnit::Sweep;
};

void to_json(nlohmann::json& j, const ChainConfig& c);
void from_json(const nlohmann::json& j, ChainConfig& c);

/// Single-site Metropolis-Hastings: a uniform site, a uniform different
/// token, accepted with probability min(1, e^{-beta dH}).
class MhSampler {
 public:
  explicit MhSampler(const ModelSpec& spec);
  void proposal(TokenSeq& x, Rng& rng) const;
  /// D proposals.
  void sweep(TokenSeq& x, Rng& rng) const;

 private:
  ModelSpec spec_;
  std::vector<std::array<int, 4>> nbrs_;
  // Ising acceptance thresholds indexed by [spin is +1][neighbour sum + 4].
  double accept_[2][9];
};

void mh_sweep(const ModelSpec& spec, TokenSeq& x, Rng& rng);

/// Probability that one MH proposal moves x to x^{site<-token}.
double mh_transition_probability(const ModelSpec& spec, std::span<const Token> x, int site, Token token);

/// Fortuin-Kasteleyn bond probability: 1 - e^{-2 beta J} (Ising), 1 - e^{-beta J} (Potts).
double sw_bond_probability(const ModelSpec& spec);

/// One Swendsen-Wang update. Requires h = 0 and J >= 0.
void sw_step(const ModelSpec& spec, TokenSeq& x, Rng& rng);

/// Cluster labels (component root per site) for the given bond list; the
/// partition does not depend on the order of `bonds`.
std::vector<int> connected_components(int sites, const std::vector<std::pair<int, int>>& bonds);

/// Runs `chains` independent chains from uniform starts: burn-in, then
/// `rounds` collections spaced `thin` iterations apart. Output is round-major
/// (all chains of round 0, then round 1, ...).
std::vector<TokenSeq> run_chain(const ModelSpec& spec, McmcAlgo algo, const ChainConfig& config);

}  // namespace mdns
