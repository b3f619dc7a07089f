#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mdns/lattice.hpp"
#include "mdns/rng.hpp"
#include "mdns/score.hpp"

namespace mdns {

inline constexpr std::uint64_t kDefaultStateCap = std::uint64_t{1} << 24;
inline constexpr std::uint64_t kDefaultCompletionCap = std::uint64_t{1} << 20;

/// Enumerated target distribution.
///
/// States are indexed lexicographically in base N over the sites in row-major
/// order, the first site being the most significant digit (digit = token - 1).
struct ExactTable {
  ModelSpec spec;
  std::vector<double> log_weights;  // -beta H(x) per state index
  double log_Z = 0.0;

  std::uint64_t size() const { return log_weights.size(); }
  double prob(std::uint64_t index) const;
  std::vector<double> probabilities() const;
};

/// Throws a cap error when N^D exceeds `state_cap`.
ExactTable build_exact(const ModelSpec& spec, std::uint64_t state_cap = kDefaultStateCap);

/// N^D, or 0 when it overflows 64 bits.
std::uint64_t state_count(const ModelSpec& spec);

std::uint64_t encode_state(const ModelSpec& spec, std::span<const Token> x);
TokenSeq decode_state(const ModelSpec& spec, std::uint64_t index);

/// P(X^site = n | unmasked entries of x) under pi, by summing over every
/// completion of the masked sites. x[site] must be masked.
std::vector<double> exact_conditional(const ExactTable& table, std::span<const Token> x, int site,
                                      std::uint64_t completion_cap = kDefaultCompletionCap);

/// Conditionals for every site at once, written as a D x N row-major matrix.
/// Rows of unmasked sites are one-hot at the observed token.
void exact_conditional_matrix(const ExactTable& table, std::span<const Token> x, std::span<double> out,
                              std::uint64_t completion_cap = kDefaultCompletionCap);

/// V(x) = log( N^{-#masked} sum over completions of e^{r} ).
double exact_value(const ExactTable& table, std::span<const Token> x,
                   std::uint64_t completion_cap = kDefaultCompletionCap);

struct Divergences {
  double tv = 0.0;
  double kl = 0.0;
  double chi2 = 0.0;
};

/// Divergences of the empirical distribution counts/total from pi.
Divergences divergences(std::span<const std::uint64_t> counts, const ExactTable& table);

std::vector<std::uint64_t> histogram(const ExactTable& table, std::span<const TokenSeq> samples);

std::vector<TokenSeq> exact_sample(const ExactTable& table, Rng& rng, std::size_t count);

/// Writes "index,energy" rows, energy = H(x).
void write_energy_csv(const ExactTable& table, std::ostream& os);

/// Scores each masked site with its exact conditional under pi. Stands in
/// for a perfectly trained model in oracle tests.
class ExactScore final : public ScoreFunction {
 public:
  explicit ExactScore(const ExactTable& table) : table_(table) {}

  int sites() const override { return table_.spec.sites(); }
  int vocab() const override { return table_.spec.N; }
  void evaluate(const Token* states, const double* times, std::size_t count, double* out) override;

 private:
  const ExactTable& table_;
};

}  // namespace mdns
