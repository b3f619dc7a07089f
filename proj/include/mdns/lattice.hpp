#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mdns {

/// Token values are 1-based: {1, ..., N}. kMask sits outside that range.
using Token = std::uint8_t;
inline constexpr Token kMask = 0;

/// Fully specified configuration, entries in {1, ..., N}.
using TokenSeq = std::vector<Token>;
/// Partially masked configuration, entries in {kMask, 1, ..., N}.
using MaskedSeq = std::vector<Token>;

enum class ModelKind { Ising, Potts };

/// Target distribution on a periodic L x L lattice.
///
/// Ising tokens: 1 is spin -1, 2 is spin +1. Potts tokens are the q colours.
struct ModelSpec {
  ModelKind kind = ModelKind::Ising;
  int L = 4;
  int N = 2;
  double J = 1.0;
  double h = 0.0;
  double beta = 1.0;

  int sites() const { return L * L; }

  /// Throws a config error when any invariant is violated (L = 1 included).
  void validate() const;

  static ModelSpec ising(int L, double J, double h, double beta);
  static ModelSpec potts(int L, int q, double J, double beta);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

namespace lattice {

inline int ising_spin(Token t) { return t == 2 ? 1 : -1; }
inline Token ising_token(int spin) { return spin > 0 ? Token{2} : Token{1}; }

/// Neighbours in the order right, left, down, up. For L = 2 the left and
/// right (and up and down) neighbours coincide.
std::array<int, 4> neighbors(const ModelSpec& spec, int site);

/// Throws unless x has length D and every entry lies in {1, ..., N}.
void check_config(const ModelSpec& spec, std::span<const Token> x);

/// H(x). Sums the right and down bond of every site, so each of the 2 L^2
/// bonds is counted once; at L = 2 the wrap-around duplicates are kept.
double energy(const ModelSpec& spec, std::span<const Token> x);

/// H(x with x[site] = new_token) - H(x), from the four neighbours.
double delta_energy(const ModelSpec& spec, std::span<const Token> x, int site, Token new_token);

/// r(x) = -beta H(x) + D log N, so that E_unif[e^r] = Z.
double reward(const ModelSpec& spec, std::span<const Token> x);

/// Same, but at an explicit inverse temperature (used by warm-up).
double reward_at(const ModelSpec& spec, double beta, std::span<const Token> x);

/// Unnormalised single-site conditional logits at `site`, treating masked
/// neighbours as contributing nothing. Writes N values into `out`.
void conditional_logits(const ModelSpec& spec, std::span<const Token> x, int site,
                        std::span<double> out);

std::vector<double> conditional_logits(const ModelSpec& spec, std::span<const Token> x, int site);

}  // namespace lattice
}  // namespace mdns
