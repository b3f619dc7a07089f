#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdns/error.hpp"
#include "mdns/exact.hpp"
#include "mdns/metrics.hpp"
#include "mdns/rng.hpp"

using namespace mdns;

namespace {

std::vector<TokenSeq> random_samples(int L, int N, std::size_t n, Rng& rng) {
  std::vector<TokenSeq> xs(n, TokenSeq(L * L));
  for (auto& x : xs)
    for (auto& t : x) t = static_cast<Token>(1 + rng.below(N));
  return xs;
}

ObservableReport constant_report(int L, double m) {
  ObservableReport r;
  r.L = L;
  const std::size_t K = observable_indices(L).size();
  r.mag_row.assign(K, m);
  r.mag_col.assign(K, m);
  r.corr_row.assign(K, std::vector<double>(K, 0.0));
  r.corr_col = r.corr_row;
  return r;
}

}  // namespace

TEST(Metrics, EssExamples) {
  EXPECT_NEAR(ess(std::vector<double>(10, -4.0)), 1.0, 1e-15);
  EXPECT_NEAR(ess(std::vector<double>{0.0, std::log(3.0)}), 0.8, 1e-15);
  std::vector<double> one_big(100, -1000.0);
  one_big[17] = 0.0;
  EXPECT_NEAR(ess(one_big), 0.01, 1e-12);
  EXPECT_THROW(ess(std::vector<double>{}), Error);
}

TEST(Metrics, EssShiftAndPermutationInvariant) {
  Rng rng(1);
  std::vector<double> w(200);
  for (auto& v : w) v = 3.0 * rng.uniform();
  const double base = ess(w);
  EXPECT_GT(base, 0.0);
  EXPECT_LE(base, 1.0);
  auto shifted = w;
  for (auto& v : shifted) v += 750.0;
  EXPECT_NEAR(ess(shifted), base, 1e-12);
  std::shuffle(w.begin(), w.end(), rng);
  EXPECT_NEAR(ess(w), base, 1e-12);
}

TEST(Metrics, PathKlMatchesEnumeration) {
  // Weights of a sampler q: W = r - log(N^D q), so log Z - E_q[W] = KL(q || pi).
  const auto s = ModelSpec::ising(2, 1.0, 0.1, 0.5);
  const auto t = build_exact(s);
  // A population with integer multiplicities realises q exactly.
  Rng rng(2);
  std::vector<int> copies(16);
  int total = 0;
  for (auto& c : copies) total += (c = 1 + static_cast<int>(rng.below(20)));
  std::vector<double> W;
  double kl = 0.0;
  for (std::uint64_t i = 0; i < 16; ++i) {
    const double q = static_cast<double>(copies[i]) / total;
    const double w = lattice::reward(s, decode_state(s, i)) - std::log(16.0 * q);
    W.insert(W.end(), copies[i], w);
    kl += q * std::log(q / t.prob(i));
  }
  EXPECT_NEAR(path_kl_estimate(W, t.log_Z), kl, 1e-12);
}

TEST(Metrics, IsingAllUp) {
  const std::vector<TokenSeq> xs(10, TokenSeq(16, 2));
  const auto r = ising_observables(4, xs);
  EXPECT_EQ(r.mag_row.size(), 5u);
  for (double m : r.mag_row) EXPECT_DOUBLE_EQ(m, 4.0);
  for (const auto& row : r.corr_row)
    for (double c : row) EXPECT_DOUBLE_EQ(c, 0.0);
  EXPECT_DOUBLE_EQ(r.magnetization, 1.0);
}

TEST(Metrics, IsingEndsAliasForEvenL) {
  Rng rng(3);
  const auto r = ising_observables(4, random_samples(4, 2, 500, rng));
  EXPECT_EQ(observable_indices(4), (std::vector<int>{-2, -1, 0, 1, 2}));
  EXPECT_DOUBLE_EQ(r.mag_row.front(), r.mag_row.back());
  EXPECT_DOUBLE_EQ(r.corr_col.front()[2], r.corr_col.back()[2]);
  EXPECT_EQ(observable_indices(3), (std::vector<int>{-1, 0, 1}));
}

TEST(Metrics, IsingCheckerboardCorrelation) {
  // Two equally likely checkerboards: E[s] = 0 and rows at odd distance anticorrelate.
  TokenSeq a(16), b(16);
  for (int i = 0; i < 16; ++i) {
    a[i] = ((i / 4 + i % 4) % 2) ? 2 : 1;
    b[i] = a[i] == 2 ? 1 : 2;
  }
  const std::vector<TokenSeq> xs{a, b};
  const auto r = ising_observables(4, xs);
  for (double m : r.mag_row) EXPECT_DOUBLE_EQ(m, 0.0);
  // k = 0 vs k = 1 is physical rows 0 and 1: each of the 4 columns gives -1.
  EXPECT_DOUBLE_EQ(r.corr_row[2][3], -4.0);
  EXPECT_DOUBLE_EQ(r.corr_row[2][2], 4.0);
  EXPECT_DOUBLE_EQ(r.corr_dist_row[1], -4.0);
  EXPECT_DOUBLE_EQ(r.corr_dist_row[2], 4.0);
}

TEST(Metrics, PottsExamples) {
  const std::vector<TokenSeq> same(6, TokenSeq(9, 3));
  const auto r = potts_observables(3, 3, same);
  for (double m : r.mag_row) EXPECT_DOUBLE_EQ(m, 3.0);
  EXPECT_DOUBLE_EQ(r.corr_row[0][1], 3.0 * (1.0 - 1.0 / 3.0));

  const std::vector<TokenSeq> cycle{TokenSeq(9, 1), TokenSeq(9, 2), TokenSeq(9, 3)};
  const auto u = potts_observables(3, 3, cycle);
  EXPECT_NEAR(u.magnetization, 0.0, 1e-15);

  Rng rng(4);
  const auto v = potts_observables(3, 3, random_samples(3, 3, 100000, rng));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      if (a != b) {
        EXPECT_NEAR(v.corr_row[a][b], 0.0, 0.02);
      }
    }
}

TEST(Metrics, ObservableErrorsLiteralSum) {
  const auto truth = constant_report(4, 0.0);
  const auto rep = constant_report(4, 0.1);
  // Five k values per direction: (5 * 0.1 * 2) / (2 * 4).
  EXPECT_NEAR(observable_errors(rep, truth).mag_err, 0.125, 1e-15);
  EXPECT_DOUBLE_EQ(observable_errors(rep, truth).corr_err, 0.0);
  EXPECT_DOUBLE_EQ(observable_errors(rep, rep).mag_err, 0.0);
  EXPECT_THROW(observable_errors(rep, constant_report(3, 0.0)), Error);
}

TEST(Metrics, ObservableErrorsPseudometric) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = ising_observables(4, random_samples(4, 2, 30, rng));
    const auto b = ising_observables(4, random_samples(4, 2, 30, rng));
    const auto c = ising_observables(4, random_samples(4, 2, 30, rng));
    const auto ab = observable_errors(a, b), ba = observable_errors(b, a);
    const auto bc = observable_errors(b, c), ac = observable_errors(a, c);
    EXPECT_DOUBLE_EQ(ab.mag_err, ba.mag_err);
    EXPECT_DOUBLE_EQ(ab.corr_err, ba.corr_err);
    EXPECT_LE(ac.mag_err, ab.mag_err + bc.mag_err + 1e-12);
    EXPECT_LE(ac.corr_err, ab.corr_err + bc.corr_err + 1e-12);
    EXPECT_DOUBLE_EQ(observable_errors(a, a).corr_err, 0.0);
  }
}

TEST(Metrics, ObservablesPermutationInvariant) {
  Rng rng(6);
  auto xs = random_samples(3, 3, 200, rng);
  const auto a = potts_observables(3, 3, xs);
  std::shuffle(xs.begin(), xs.end(), rng);
  const auto b = potts_observables(3, 3, xs);
  EXPECT_NEAR(observable_errors(a, b).mag_err, 0.0, 1e-12);
  EXPECT_NEAR(observable_errors(a, b).corr_err, 0.0, 1e-12);
}

TEST(Metrics, CorrCsv) {
  const std::vector<TokenSeq> xs(3, TokenSeq(16, 1));
  std::ostringstream os;
  write_corr_csv(ising_observables(4, xs), os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "r,C_row,C_col");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Metrics, InputValidation) {
  EXPECT_THROW(ising_observables(4, std::vector<TokenSeq>{}), Error);
  EXPECT_THROW(ising_observables(4, std::vector<TokenSeq>{TokenSeq(9, 1)}), Error);
}
