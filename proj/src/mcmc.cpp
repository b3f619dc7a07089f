#include "mdns/mcmc.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"

namespace mdns {
namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  // Smaller index becomes the root so labels are order independent.
  if (a < b)
    parent[b] = a;
  else
    parent[a] = b;
}

void check_sw(const ModelSpec& spec) {
  if (spec.h != 0.0) throw_config("Swendsen-Wang requires h = 0");
  if (spec.J < 0.0) throw_config("Swendsen-Wang requires J >= 0");
}

}  // namespace

std::string to_string(McmcAlgo a) { return a == McmcAlgo::MH ? "mh" : "sw"; }

McmcAlgo mcmc_algo_from_string(const std::string& name) {
  if (name == "mh") return McmcAlgo::MH;
  if (name == "sw") return McmcAlgo::SW;
  throw_config("unknown baseline algorithm '" + name + "' (expected mh or sw)");
}

void to_json(nlohmann::json& j, const ChainConfig& c) {
  j = nlohmann::json{{"chains", c.chains}, {"burnin", c.burnin}, {"thin", c.thin}, {"rounds", c.rounds},
                     {"seed", c.seed},     {"unit", c.unit == MhUnit::Sweep ? "sweep" : "proposal"}};
}

void from_json(const nlohmann::json& j, ChainConfig& c) {
  c.chains = j.value("chains", c.chains);
  c.burnin = j.value("burnin", c.burnin);
  c.thin = j.value("thin", c.thin);
  c.rounds = j.value("rounds", c.rounds);
  c.seed = j.value("seed", c.seed);
  const std::string unit = j.value("unit", std::string("sweep"));
  if (unit == "sweep")
    c.unit = MhUnit::Sweep;
  else if (unit == "proposal")
    c.unit = MhUnit::Proposal;
  else
    throw_config("unknown MH unit '" + unit + "' (expected sweep or proposal)");
}

MhSampler::MhSampler(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  for (int i = 0; i < spec_.sites(); ++i) nbrs_.push_back(lattice::neighbors(spec_, i));
  for (int up = 0; up < 2; ++up)
    for (int sum = -4; sum <= 4; ++sum) {
      const int s = up ? 1 : -1;
      // Flipping s to -s changes H by 2 s (J sum + h).
      const double dH = 2.0 * s * (spec_.J * sum + spec_.h);
      accept_[up][sum + 4] = std::min(1.0, std::exp(-spec_.beta * dH));
    }
}

void MhSampler::proposal(TokenSeq& x, Rng& rng) const {
  const int D = spec_.sites();
  const int site = static_cast<int>(rng.below(D));
  if (spec_.kind == ModelKind::Ising) {
    const auto& nb = nbrs_[site];
    const int sum = lattice::ising_spin(x[nb[0]]) + lattice::ising_spin(x[nb[1]]) + lattice::ising_spin(x[nb[2]]) +
                    lattice::ising_spin(x[nb[3]]);
    const int up = x[site] == 2;
    const double a = accept_[up][sum + 4];
    if (a >= 1.0 || rng.uniform() < a) x[site] = up ? 1 : 2;
    return;
  }
  // Uniform over the N - 1 other tokens.
  Token t = static_cast<Token>(1 + rng.below(spec_.N - 1));
  if (t >= x[site]) ++t;
  const double dH = lattice::delta_energy(spec_, x, site, t);
  if (dH <= 0.0 || rng.uniform() < std::exp(-spec_.beta * dH)) x[site] = t;
}

void MhSampler::sweep(TokenSeq& x, Rng& rng) const {
  for (int i = 0; i < spec_.sites(); ++i) proposal(x, rng);
}

void mh_sweep(const ModelSpec& spec, TokenSeq& x, Rng& rng) { MhSampler(spec).sweep(x, rng); }

double mh_transition_probability(const ModelSpec& spec, std::span<const Token> x, int site, Token token) {
  if (token == x[site]) throw_config("transition probability is defined for a changed token");
  const double dH = lattice::delta_energy(spec, x, site, token);
  const double accept = std::min(1.0, std::exp(-spec.beta * dH));
  return accept / (static_cast<double>(spec.sites()) * (spec.N - 1));
}

double sw_bond_probability(const ModelSpec& spec) {
  const double scale = spec.kind == ModelKind::Ising ? 2.0 : 1.0;
  return 1.0 - std::exp(-scale * spec.beta * spec.J);
}

std::vector<int> connected_components(int sites, const std::vector<std::pair<int, int>>& bonds) {
  std::vector<int> parent(sites);
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& [a, b] : bonds) unite(parent, a, b);
  for (int i = 0; i < sites; ++i) parent[i] = find_root(parent, i);
  return parent;
}

void sw_step(const ModelSpec& spec, TokenSeq& x, Rng& rng) {
  check_sw(spec);
  const int L = spec.L;
  const int D = spec.sites();
  const double p = sw_bond_probability(spec);
  std::vector<std::pair<int, int>> bonds;
  bonds.reserve(2 * D);
  for (int i = 0; i < D; ++i) {
    const int r = i / L, c = i % L;
    const int right = r * L + (c + 1) % L;
    const int down = ((r + 1) % L) * L + c;
    if (x[i] == x[right] && rng.uniform() < p) bonds.push_back({i, right});
    if (x[i] == x[down] && rng.uniform() < p) bonds.push_back({i, down});
  }
  const auto root = connected_components(D, bonds);
  std::vector<Token> label(D, kMask);
  for (int i = 0; i < D; ++i) {
    if (label[root[i]] == kMask) label[root[i]] = static_cast<Token>(1 + rng.below(spec.N));
    x[i] = label[root[i]];
  }
}

std::vector<TokenSeq> run_chain(const ModelSpec& spec, McmcAlgo algo, const ChainConfig& config) {
  spec.validate();
  if (config.chains < 1 || config.burnin < 0 || config.thin < 1 || config.rounds < 0)
    throw_config("chain config needs chains >= 1, thin >= 1, burnin >= 0 and rounds >= 0");
  if (algo == McmcAlgo::SW) check_sw(spec);
  const int D = spec.sites();
  const MhSampler mh(spec);
  auto advance = [&](TokenSeq& x, Rng& rng, std::int64_t iterations) {
    for (std::int64_t it = 0; it < iterations; ++it) {
      if (algo == McmcAlgo::SW)
        sw_step(spec, x, rng);
      else if (config.unit == MhUnit::Sweep)
        mh.sweep(x, rng);
      else
        mh.proposal(x, rng);
    }
  };

  std::vector<TokenSeq> out(static_cast<std::size_t>(config.rounds) * config.chains);
  const std::uint64_t key = stream_key(config.seed, algo == McmcAlgo::MH ? "mcmc/mh" : "mcmc/sw");
  for (int c = 0; c < config.chains; ++c) {
    Rng rng(derive_key(key, c));
    TokenSeq x(D);
    for (auto& t : x) t = static_cast<Token>(1 + rng.below(spec.N));
    advance(x, rng, config.burnin);
    for (std::int64_t r = 0; r < config.rounds; ++r) {
      advance(x, rng, config.thin);
      out[static_cast<std::size_t>(r) * config.chains + c] = x;
    }
  }
  return out;
}

}  // namespace mdns
