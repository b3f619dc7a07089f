#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mdns/error.hpp"
#include "mdns/exact.hpp"

using namespace mdns;

namespace {

double brute_log_Z(const ModelSpec& s) {
  // Independent of build_exact: plain sum with a fixed shift.
  const std::uint64_t n = state_count(s);
  double total = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) total += std::exp(-s.beta * lattice::energy(s, decode_state(s, i)) - 10.0);
  return std::log(total) + 10.0;
}

// P(x_site = n | unmasked entries) by scanning every state of the table.
std::vector<double> brute_conditional(const ExactTable& t, const MaskedSeq& x, int site) {
  std::vector<double> p(t.spec.N, 0.0);
  for (std::uint64_t i = 0; i < t.size(); ++i) {
    const auto y = decode_state(t.spec, i);
    bool ok = true;
    for (std::size_t d = 0; d < x.size() && ok; ++d) ok = x[d] == kMask || x[d] == y[d];
    if (ok) p[y[site] - 1] += std::exp(t.log_weights[i]);
  }
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

TEST(Exact, SmallestTable) {
  const auto t = build_exact(ModelSpec::ising(2, 1.0, 0.0, 0.5));
  EXPECT_EQ(t.size(), 16u);
}

TEST(Exact, LogZMatchesBruteForce) {
  for (const auto& s : {ModelSpec::ising(3, 1.0, 0.1, 0.28), ModelSpec::ising(2, 1.0, 0.3, 0.9),
                        ModelSpec::potts(2, 3, 1.0, 1.005)}) {
    const auto t = build_exact(s);
    EXPECT_NEAR(t.log_Z, brute_log_Z(s), 1e-12 * std::abs(t.log_Z));
  }
}

TEST(Exact, LogZReproducibleAndMatchesRewardSum) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.28);
  const auto a = build_exact(s), b = build_exact(s);
  EXPECT_EQ(a.log_Z, b.log_Z);
  EXPECT_TRUE(std::isfinite(a.log_Z));
  double acc = 0.0;
  for (std::uint64_t i = 0; i < 512; ++i) acc += std::exp(lattice::reward(s, decode_state(s, i)) - 9 * std::log(2.0));
  EXPECT_NEAR(std::log(acc), a.log_Z, 1e-12);
}

TEST(Exact, PaperLowTemperatureProbabilities) {
  const auto t = build_exact(ModelSpec::ising(4, 1.0, 0.1, 0.6));
  EXPECT_NEAR(t.prob(encode_state(t.spec, TokenSeq(16, 2))), 0.7530, 5e-5);
  EXPECT_NEAR(t.prob(encode_state(t.spec, TokenSeq(16, 1))), 0.1104, 5e-5);
}

TEST(Exact, StateCapRaisesCapError) {
  try {
    build_exact(ModelSpec::ising(4, 1.0, 0.0, 0.3), 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CapExceeded);
    EXPECT_NE(std::string(e.what()).find("65536"), std::string::npos);
  }
}

TEST(Exact, EncodeDecodeLexicographic) {
  const auto s = ModelSpec::potts(2, 3, 1.0, 1.0);
  EXPECT_EQ(decode_state(s, 0), TokenSeq({1, 1, 1, 1}));
  EXPECT_EQ(decode_state(s, 1), TokenSeq({1, 1, 1, 2}));
  EXPECT_EQ(decode_state(s, 3), TokenSeq({1, 1, 2, 1}));
  for (std::uint64_t i = 0; i < 81; ++i) EXPECT_EQ(encode_state(s, decode_state(s, i)), i);
}

TEST(Exact, ConditionalFullyMaskedSymmetric) {
  const auto t = build_exact(ModelSpec::ising(4, 1.0, 0.0, 0.44));
  const MaskedSeq x(16, kMask);
  for (int d = 0; d < 16; d += 5) {
    const auto p = exact_conditional(t, x, d);
    EXPECT_NEAR(p[0], 0.5, 1e-12);
    EXPECT_NEAR(p[1], 0.5, 1e-12);
  }
}

TEST(Exact, ConditionalSingleMaskMatchesClosedForm) {
  const auto s = ModelSpec::ising(3, 1.0, 0.2, 0.6);
  const auto t = build_exact(s);
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    MaskedSeq x(9);
    for (auto& v : x) v = static_cast<Token>(1 + rng.below(2));
    const int d = static_cast<int>(rng.below(9));
    x[d] = kMask;
    const auto p = exact_conditional(t, x, d);
    const auto l = lattice::conditional_logits(s, x, d);
    const double q1 = 1.0 / (1.0 + std::exp(l[0] - l[1]));
    EXPECT_NEAR(p[1], q1, 1e-12);
  }
}

TEST(Exact, ConditionalHalfMaskedMatchesScan) {
  const auto t = build_exact(ModelSpec::ising(3, 1.0, 0.1, 0.28));
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    MaskedSeq x(9);
    for (auto& v : x) v = static_cast<Token>(1 + rng.below(2));
    for (int k = 0; k < 5; ++k) x[rng.below(9)] = kMask;
    for (int d = 0; d < 9; ++d) {
      if (x[d] != kMask) continue;
      const auto p = exact_conditional(t, x, d);
      const auto q = brute_conditional(t, x, d);
      EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
      EXPECT_NEAR(p[0], q[0], 1e-12);
    }
  }
}

TEST(Exact, ConditionalRequiresMaskedSite) {
  const auto t = build_exact(ModelSpec::ising(2, 1.0, 0.0, 0.3));
  EXPECT_THROW(exact_conditional(t, MaskedSeq{1, 2, 1, 2}, 0), Error);
}

TEST(Exact, CompletionCap) {
  const auto t = build_exact(ModelSpec::ising(4, 1.0, 0.0, 0.3));
  try {
    exact_conditional(t, MaskedSeq(16, kMask), 0, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CapExceeded);
  }
}

TEST(Exact, ChainRuleExhaustive2x2) {
  const auto s = ModelSpec::ising(2, 1.0, 0.3, 0.7);
  const auto t = build_exact(s);
  std::vector<int> perm{0, 1, 2, 3};
  for (std::uint64_t i = 0; i < t.size(); ++i) {
    const auto x = decode_state(s, i);
    std::sort(perm.begin(), perm.end());
    do {
      MaskedSeq m(4, kMask);
      double p = 1.0;
      for (int d : perm) {
        p *= exact_conditional(t, m, d)[x[d] - 1];
        m[d] = x[d];
      }
      ASSERT_NEAR(p, t.prob(i), 1e-10 * t.prob(i));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(Exact, ChainRuleRandomized3x3) {
  const auto s = ModelSpec::potts(3, 3, 1.0, 0.8);
  const auto t = build_exact(s);
  Rng rng(12);
  std::vector<int> perm(9);
  for (int rep = 0; rep < 30; ++rep) {
    const std::uint64_t i = rng.below(t.size());
    const auto x = decode_state(s, i);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MaskedSeq m(9, kMask);
    double logp = 0.0;
    for (int d : perm) {
      logp += std::log(exact_conditional(t, m, d)[x[d] - 1]);
      m[d] = x[d];
    }
    EXPECT_NEAR(logp, std::log(t.prob(i)), 1e-10);
  }
}

TEST(Exact, ValueBoundaryCases) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.28);
  const auto t = build_exact(s);
  EXPECT_NEAR(exact_value(t, MaskedSeq(9, kMask)), t.log_Z, 1e-12);
  const auto x = decode_state(s, 137);
  EXPECT_NEAR(exact_value(t, x), lattice::reward(s, x), 1e-12);
}

TEST(Exact, ValueRatioAndTowerIdentities) {
  const auto s = ModelSpec::potts(2, 3, 1.0, 1.2);
  const auto t = build_exact(s);
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    MaskedSeq x(4);
    for (auto& v : x) v = rng.below(2) ? kMask : static_cast<Token>(1 + rng.below(3));
    const int d = static_cast<int>(rng.below(4));
    x[d] = kMask;
    const double v = exact_value(t, x);
    const auto cond = exact_conditional(t, x, d);
    double tower = 0.0;
    for (Token n = 1; n <= 3; ++n) {
      MaskedSeq y = x;
      y[d] = n;
      const double vy = exact_value(t, y);
      EXPECT_NEAR(std::exp(vy - v), 3.0 * cond[n - 1], 1e-10);
      tower += std::exp(vy) / 3.0;
    }
    EXPECT_NEAR(std::log(tower), v, 1e-10);
  }
}

TEST(Exact, DivergencesOfExactProportions) {
  // J = h = 0 makes pi exactly uniform.
  const auto t = build_exact(ModelSpec::ising(2, 0.0, 0.0, 1.0));
  const std::vector<std::uint64_t> counts(16, 5);
  const auto d = divergences(counts, t);
  EXPECT_NEAR(d.tv, 0.0, 1e-15);
  EXPECT_NEAR(d.kl, 0.0, 1e-15);
  EXPECT_NEAR(d.chi2, 0.0, 1e-15);
}

TEST(Exact, DivergencesPointMass) {
  const auto t = build_exact(ModelSpec::ising(3, 1.0, 0.1, 0.4));
  std::vector<std::uint64_t> counts(t.size(), 0);
  counts[77] = 10;
  const auto d = divergences(counts, t);
  const double p = t.prob(77);
  EXPECT_NEAR(d.tv, 1.0 - p, 1e-12);
  EXPECT_NEAR(d.kl, -std::log(p), 1e-10);
  EXPECT_NEAR(d.chi2, 1.0 / p - 1.0, 1e-6 / p);
}

TEST(Exact, SampleCountZero) {
  const auto t = build_exact(ModelSpec::ising(2, 1.0, 0.0, 0.3));
  Rng rng(1);
  EXPECT_TRUE(exact_sample(t, rng, 0).empty());
}

TEST(Exact, SampleHighTemperatureIsUniform) {
  const auto t = build_exact(ModelSpec::ising(3, 1.0, 0.0, 1e-9));
  Rng rng(2);
  const std::size_t n = 40000;
  const auto xs = exact_sample(t, rng, n);
  for (int d = 0; d < 9; ++d) {
    double up = 0;
    for (const auto& x : xs) up += x[d] == 2;
    EXPECT_NEAR(up / n, 0.5, 3.0 * std::sqrt(0.25 / n));
  }
}

TEST(Exact, SampleTvShrinksLikeInverseRoot) {
  const auto t = build_exact(ModelSpec::ising(3, 1.0, 0.1, 0.28));
  double tv1 = 0.0, tv4 = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    Rng rng(100 + rep);
    tv1 += divergences(histogram(t, exact_sample(t, rng, 1 << 14)), t).tv;
    tv4 += divergences(histogram(t, exact_sample(t, rng, 1 << 16)), t).tv;
  }
  EXPECT_GT(tv1 / tv4, 1.6);
  EXPECT_LT(tv1 / tv4, 2.4);
}

TEST(Exact, SampleFloorAtTableScale) {
  const auto t = build_exact(ModelSpec::ising(4, 1.0, 0.1, 0.28));
  Rng rng(20);
  const auto d = divergences(histogram(t, exact_sample(t, rng, std::size_t{1} << 20)), t);
  EXPECT_GT(d.tv, 0.06);
  EXPECT_LT(d.tv, 0.08);
}

TEST(Exact, ExactScoreRowsAreConditionals) {
  const auto t = build_exact(ModelSpec::ising(2, 1.0, 0.2, 0.5));
  ExactScore score(t);
  const MaskedSeq x{kMask, 2, kMask, 1};
  std::vector<double> out(8);
  score.evaluate(x.data(), nullptr, 1, out.data());
  const auto c0 = exact_conditional(t, x, 0);
  EXPECT_NEAR(out[0], c0[0], 1e-15);
  EXPECT_DOUBLE_EQ(out[2], 0.0);  // unmasked site 1 is one-hot at token 2
  EXPECT_DOUBLE_EQ(out[3], 1.0);
}

TEST(Exact, EnergyCsv) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.5);
  std::ostringstream os;
  write_energy_csv(build_exact(s), os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "index,energy");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 16);
  EXPECT_NE(os.str().find("\n0,-8"), std::string::npos);
}
