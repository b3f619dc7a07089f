#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mdns/rng.hpp"

using namespace mdns;

TEST(Rng, SameKeySameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, StreamsDifferByTagAndIndex) {
  std::set<std::uint64_t> firsts;
  for (const char* tag : {"train/sample", "train/buffer", "eval"})
    for (std::uint64_t i = 0; i < 10; ++i) firsts.insert(stream(3, tag, i)());
  EXPECT_EQ(firsts.size(), 30u);
  EXPECT_NE(stream_key(1, "x"), stream_key(2, "x"));
}

TEST(Rng, UniformRange) {
  Rng r(7);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean of n uniforms has sd 1/sqrt(12 n).
  EXPECT_NEAR(sum / n, 0.5, 4.0 / std::sqrt(12.0 * n));
}

TEST(Rng, BelowIsUniform) {
  Rng r(11);
  const int k = 7, n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(k);
    ASSERT_LT(v, static_cast<std::uint64_t>(k));
    ++counts[v];
  }
  double chi2 = 0.0;
  const double e = static_cast<double>(n) / k;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  // 6 degrees of freedom; 0.999 quantile is 22.46.
  EXPECT_LT(chi2, 22.46);
}
