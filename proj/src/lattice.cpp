#include "mdns/lattice.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"

namespace mdns {

void ModelSpec::validate() const {
  if (L < 2) throw_config("lattice side L must be >= 2 (L = 1 self-adjacency is degenerate), got " +
                          std::to_string(L));
  if (N < 2) throw_config("vocabulary size N must be >= 2, got " + std::to_string(N));
  if (N > 250) throw_config("vocabulary size N must be <= 250");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw_config("beta must be positive and finite");
  if (!std::isfinite(J) || !std::isfinite(h)) throw_config("J and h must be finite");
  if (kind == ModelKind::Ising && N != 2) throw_config("Ising model requires N = 2");
  if (kind == ModelKind::Potts && h != 0.0) throw_config("Potts model does not support an external field (h must be 0)");
}

ModelSpec ModelSpec::ising(int L, double J, double h, double beta) {
  return ModelSpec{ModelKind::Ising, L, 2, J, h, beta};
}

ModelSpec ModelSpec::potts(int L, int q, double J, double beta) {
  return ModelSpec{ModelKind::Potts, L, q, J, 0.0, beta};
}

std::string to_string(ModelKind kind) { return kind == ModelKind::Ising ? "ising" : "potts"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "ising" || name == "Ising") return ModelKind::Ising;
  if (name == "potts" || name == "Potts") return ModelKind::Potts;
  throw_config("unknown model kind '" + name + "'");
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"L", spec.L}, {"N", spec.N},
                     {"J", spec.J},                  {"h", spec.h}, {"beta", spec.beta}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  try {
    spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
    spec.L = j.at("L").get<int>();
    spec.N = j.value("N", spec.kind == ModelKind::Ising ? 2 : 3);
    spec.J = j.value("J", 1.0);
    spec.h = j.value("h", 0.0);
    spec.beta = j.at("beta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw_config(std::string("invalid model spec: ") + e.what());
  }
  spec.validate();
}

namespace lattice {

std::array<int, 4> neighbors(const ModelSpec& spec, int site) {
  const int L = spec.L;
  const int r = site / L;
  const int c = site % L;
  return {r * L + (c + 1) % L, r * L + (c + L - 1) % L, ((r + 1) % L) * L + c,
          ((r + L - 1) % L) * L + c};
}

void check_config(const ModelSpec& spec, std::span<const Token> x) {
  if (static_cast<int>(x.size()) != spec.sites())
    throw_config("configuration length " + std::to_string(x.size()) + " does not match D = " +
                 std::to_string(spec.sites()));
  for (Token t : x)
    if (t < 1 || t > spec.N) throw_config("token out of range {1..N}: " + std::to_string(int{t}));
}

double energy(const ModelSpec& spec, std::span<const Token> x) {
  if (spec.L < 2) throw_config("energy undefined for L = 1");
  const int L = spec.L;
  const int D = spec.sites();
  double bonds = 0.0;
  double field = 0.0;
  for (int i = 0; i < D; ++i) {
    const int r = i / L;
    const int c = i % L;
    const int right = r * L + (c + 1) % L;
    const int down = ((r + 1) % L) * L + c;
    if (spec.kind == ModelKind::Ising) {
      const int si = ising_spin(x[i]);
      bonds += si * (ising_spin(x[right]) + ising_spin(x[down]));
      field += si;
    } else {
      bonds += (x[i] == x[right]) + (x[i] == x[down]);
    }
  }
  return -spec.J * bonds - spec.h * field;
}

double delta_energy(const ModelSpec& spec, std::span<const Token> x, int site, Token new_token) {
  const Token old = x[site];
  if (old == new_token) return 0.0;
  const auto nb = neighbors(spec, site);
  if (spec.kind == ModelKind::Ising) {
    int sum = 0;
    for (int j : nb) sum += ising_spin(x[j]);
    const int ds = ising_spin(new_token) - ising_spin(old);
    return -spec.J * ds * sum - spec.h * ds;
  }
  int gained = 0;
  int lost = 0;
  for (int j : nb) {
    gained += x[j] == new_token;
    lost += x[j] == old;
  }
  return -spec.J * (gained - lost);
}

double reward(const ModelSpec& spec, std::span<const Token> x) {
  return reward_at(spec, spec.beta, x);
}

double reward_at(const ModelSpec& spec, double beta, std::span<const Token> x) {
  return -beta * energy(spec, x) + spec.sites() * std::log(static_cast<double>(spec.N));
}

void conditional_logits(const ModelSpec& spec, std::span<const Token> x, int site,
                        std::span<double> out) {
  const auto nb = neighbors(spec, site);
  if (spec.kind == ModelKind::Ising) {
    int sum = 0;
    for (int j : nb)
      if (x[j] != kMask) sum += ising_spin(x[j]);
    const double field = spec.beta * (spec.J * sum + spec.h);
    out[0] = -field;
    out[1] = field;
    return;
  }
  for (int n = 0; n < spec.N; ++n) out[n] = 0.0;
  for (int j : nb)
    if (x[j] != kMask) out[x[j] - 1] += spec.beta * spec.J;
}

std::vector<double> conditional_logits(const ModelSpec& spec, std::span<const Token> x, int site) {
  std::vector<double> out(spec.N);
  conditional_logits(spec, x, site, out);
  return out;
}

}  // namespace lattice
}  // namespace mdns
