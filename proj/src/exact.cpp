#include "mdns/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "mdns/error.hpp"

namespace mdns {
namespace {

// Positional value of each site's digit.
std::vector<std::uint64_t> place_values(const ModelSpec& spec) {
  const int D = spec.sites();
  std::vector<std::uint64_t> place(D);
  std::uint64_t p = 1;
  for (int d = D - 1; d >= 0; --d) {
    place[d] = p;
    p *= static_cast<std::uint64_t>(spec.N);
  }
  return place;
}

struct Completions {
  std::vector<int> masked;
  std::uint64_t base = 0;  // index contribution of the unmasked sites
  std::uint64_t count = 1;
};

Completions prepare(const ExactTable& table, std::span<const Token> x, std::uint64_t cap) {
  const ModelSpec& spec = table.spec;
  if (static_cast<int>(x.size()) != spec.sites()) throw_config("masked sequence length does not match D");
  const auto place = place_values(spec);
  Completions c;
  for (int d = 0; d < spec.sites(); ++d) {
    if (x[d] == kMask) {
      c.masked.push_back(d);
      c.count *= static_cast<std::uint64_t>(spec.N);
      if (c.count > cap)
        throw_cap("exact conditional requires more than " + std::to_string(cap) + " completions");
    } else {
      if (x[d] > spec.N) throw_config("token out of range in masked sequence");
      c.base += place[d] * static_cast<std::uint64_t>(x[d] - 1);
    }
  }
  return c;
}

// Calls f(state_index, digits) for every completion; digits[j] is the 0-based
// token placed at masked site j.
template <class F>
void for_each_completion(const ExactTable& table, const Completions& c, F&& f) {
  const auto place = place_values(table.spec);
  const int m = static_cast<int>(c.masked.size());
  const int N = table.spec.N;
  std::vector<int> digits(m, 0);
  std::uint64_t index = c.base;
  for (std::uint64_t it = 0; it < c.count; ++it) {
    f(index, digits);
    for (int j = m - 1; j >= 0; --j) {
      const std::uint64_t pv = place[c.masked[j]];
      if (++digits[j] < N) {
        index += pv;
        break;
      }
      index -= pv * static_cast<std::uint64_t>(N - 1);
      digits[j] = 0;
    }
  }
}

double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double ExactTable::prob(std::uint64_t index) const { return std::exp(log_weights[index] - log_Z); }

std::vector<double> ExactTable::probabilities() const {
  std::vector<double> p(log_weights.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_weights[i] - log_Z);
  return p;
}

std::uint64_t state_count(const ModelSpec& spec) {
  std::uint64_t n = 1;
  for (int d = 0; d < spec.sites(); ++d) {
    if (n > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(spec.N)) return 0;
    n *= static_cast<std::uint64_t>(spec.N);
  }
  return n;
}

ExactTable build_exact(const ModelSpec& spec, std::uint64_t state_cap) {
  spec.validate();
  const std::uint64_t n = state_count(spec);
  if (n == 0 || n > state_cap)
    throw_cap("exact enumeration needs N^D = " + std::to_string(spec.N) + "^" + std::to_string(spec.sites()) +
              " = " + std::to_string(n) + " states, cap is " + std::to_string(state_cap));
  ExactTable table{spec, std::vector<double>(n), 0.0};
  TokenSeq x(spec.sites(), 1);
  for (std::uint64_t i = 0; i < n; ++i) {
    table.log_weights[i] = -spec.beta * lattice::energy(spec, x);
    for (int d = spec.sites() - 1; d >= 0; --d) {
      if (++x[d] <= spec.N) break;
      x[d] = 1;
    }
  }
  table.log_Z = logsumexp(table.log_weights);
  return table;
}

std::uint64_t encode_state(const ModelSpec& spec, std::span<const Token> x) {
  std::uint64_t idx = 0;
  for (Token t : x) idx = idx * static_cast<std::uint64_t>(spec.N) + static_cast<std::uint64_t>(t - 1);
  return idx;
}

TokenSeq decode_state(const ModelSpec& spec, std::uint64_t index) {
  TokenSeq x(spec.sites());
  for (int d = spec.sites() - 1; d >= 0; --d) {
    x[d] = static_cast<Token>(index % static_cast<std::uint64_t>(spec.N) + 1);
    index /= static_cast<std::uint64_t>(spec.N);
  }
  return x;
}

std::vector<double> exact_conditional(const ExactTable& table, std::span<const Token> x, int site,
                                      std::uint64_t completion_cap) {
  if (site < 0 || site >= table.spec.sites()) throw_config("site out of range");
  if (x[site] != kMask) throw_config("exact_conditional requires the queried site to be masked");
  std::vector<double> matrix(static_cast<std::size_t>(table.spec.sites()) * table.spec.N);
  exact_conditional_matrix(table, x, matrix, completion_cap);
  return {matrix.begin() + site * table.spec.N, matrix.begin() + (site + 1) * table.spec.N};
}

void exact_conditional_matrix(const ExactTable& table, std::span<const Token> x, std::span<double> out,
                              std::uint64_t completion_cap) {
  const int D = table.spec.sites();
  const int N = table.spec.N;
  const Completions c = prepare(table, x, completion_cap);
  const int m = static_cast<int>(c.masked.size());

  double max_lw = -std::numeric_limits<double>::infinity();
  for_each_completion(table, c, [&](std::uint64_t idx, const std::vector<int>&) {
    max_lw = std::max(max_lw, table.log_weights[idx]);
  });

  // acc[j * N + n]: mass of completions with token n at masked site j.
  std::vector<double> acc(static_cast<std::size_t>(m) * N, 0.0);
  for_each_completion(table, c, [&](std::uint64_t idx, const std::vector<int>& digits) {
    const double w = std::exp(table.log_weights[idx] - max_lw);
    for (int j = 0; j < m; ++j) acc[j * N + digits[j]] += w;
  });

  std::fill(out.begin(), out.begin() + static_cast<std::size_t>(D) * N, 0.0);
  for (int d = 0; d < D; ++d)
    if (x[d] != kMask) out[d * N + (x[d] - 1)] = 1.0;
  for (int j = 0; j < m; ++j) {
    double total = 0.0;
    for (int n = 0; n < N; ++n) total += acc[j * N + n];
    for (int n = 0; n < N; ++n) out[c.masked[j] * N + n] = acc[j * N + n] / total;
  }
}

double exact_value(const ExactTable& table, std::span<const Token> x, std::uint64_t completion_cap) {
  const Completions c = prepare(table, x, completion_cap);
  std::vector<double> lw;
  lw.reserve(c.count);
  for_each_completion(table, c,
                      [&](std::uint64_t idx, const std::vector<int>&) { lw.push_back(table.log_weights[idx]); });
  const double logN = std::log(static_cast<double>(table.spec.N));
  return logsumexp(lw) + (table.spec.sites() - static_cast<double>(c.masked.size())) * logN;
}

Divergences divergences(std::span<const std::uint64_t> counts, const ExactTable& table) {
  if (counts.size() != table.size()) throw_config("histogram size does not match the state space");
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw_config("divergences need at least one sample");
  Divergences d;
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double p = static_cast<double>(counts[i]) * inv;
    const double logpi = table.log_weights[i] - table.log_Z;
    const double pi = std::exp(logpi);
    d.tv += std::abs(p - pi);
    if (p > 0) d.kl += p * (std::log(p) - logpi);
    d.chi2 += (p - pi) * (p - pi) / pi;
  }
  d.tv *= 0.5;
  return d;
}

std::vector<std::uint64_t> histogram(const ExactTable& table, std::span<const TokenSeq> samples) {
  std::vector<std::uint64_t> counts(table.size(), 0);
  for (const auto& x : samples) ++counts[encode_state(table.spec, x)];
  return counts;
}

std::vector<TokenSeq> exact_sample(const ExactTable& table, Rng& rng, std::size_t count) {
  std::vector<TokenSeq> out;
  if (count == 0) return out;
  const auto p = table.probabilities();
  std::discrete_distribution<std::uint64_t> dist(p.begin(), p.end());
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(decode_state(table.spec, dist(rng)));
  return out;
}

void write_energy_csv(const ExactTable& table, std::ostream& os) {
  os << "index,energy\n";
  os.precision(17);
  for (std::uint64_t i = 0; i < table.size(); ++i)
    os << i << ',' << lattice::energy(table.spec, decode_state(table.spec, i)) << '\n';
}

void ExactScore::evaluate(const Token* states, const double*, std::size_t count, double* out) {
  const std::size_t D = sites();
  const std::size_t N = vocab();
  for (std::size_t b = 0; b < count; ++b)
    exact_conditional_matrix(table_, {states + b * D, D}, {out + b * D * N, D * N});
}

}  // namespace mdns
