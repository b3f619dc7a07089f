#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mdns/error.hpp"
#include "mdns/exact.hpp"
#include "mdns/masked_sampler.hpp"
#include "test_support.hpp"

using namespace mdns;
using mdns::testing::StubScore;

namespace {

// Every masked site gets the same row regardless of context.
StubScore constant_rows(int D, std::vector<double> row) {
  const int N = static_cast<int>(row.size());
  return StubScore(D, N, false, [row, D, N](std::span<const Token>, double, std::span<double> out) {
    for (int d = 0; d < D; ++d)
      for (int n = 0; n < N; ++n) out[d * N + n] = row[n];
  });
}

}  // namespace

TEST(MaskedSampler, UniformScoreGivesRewardWeights) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.28);
  ScoreModel m(s, ScoreArch{{16}, false, false}, 0);
  Rng rng(1);
  for (const auto& r : sample_trajectories(m, s, 50, rng))
    EXPECT_NEAR(r.log_weight, lattice::reward(s, r.final), 1e-12);
}

TEST(MaskedSampler, ExactScoreGivesConstantLogZ) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.28);
  const auto t = build_exact(s);
  ExactScore exact(t);
  mdns::testing::MemoScore memo(exact);
  Rng rng(2);
  for (const auto& r : sample_trajectories(memo, s, 200, rng)) EXPECT_NEAR(r.log_weight, t.log_Z, 1e-9);
}

TEST(MaskedSampler, ExactScoreSamplesTarget) {
  const auto s = ModelSpec::ising(2, 1.0, 0.2, 0.5);
  const auto t = build_exact(s);
  ExactScore exact(t);
  mdns::testing::MemoScore memo(exact);
  Rng rng(3);
  const std::size_t n = 100000;
  std::vector<TokenSeq> xs;
  for (const auto& r : sample_trajectories(memo, s, n, rng)) xs.push_back(r.final);
  // E[TV] <= sum_x sqrt(pi(x) / n) / 2 <= sqrt(16 / n) / 2 = 0.0063.
  EXPECT_LT(divergences(histogram(t, xs), t).tv, 0.02);
}

TEST(MaskedSampler, SingleSiteWeight) {
  auto score = constant_rows(1, {0.25, 0.75});
  Rng rng(4);
  const auto recs = sample_trajectories(score, [](std::span<const Token>) { return 0.0; }, 4000, rng);
  std::size_t twos = 0;
  for (const auto& r : recs) {
    if (r.final[0] == 2) {
      ++twos;
      EXPECT_NEAR(r.log_weight, std::log(0.5 / 0.75), 1e-14);
    } else {
      EXPECT_NEAR(r.log_weight, std::log(0.5 / 0.25), 1e-14);
    }
  }
  EXPECT_NEAR(twos / 4000.0, 0.75, 4 * std::sqrt(0.75 * 0.25 / 4000));
}

TEST(MaskedSampler, PermutationsAreValidAndUniform) {
  auto score = constant_rows(3, {0.5, 0.5});
  Rng rng(5);
  const std::size_t n = 60000;
  std::map<std::vector<int>, int> counts;
  for (const auto& r : sample_trajectories(score, [](std::span<const Token>) { return 0.0; }, n, rng)) ++counts[r.perm];
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0.0;
  for (const auto& [p, c] : counts) chi2 += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
  EXPECT_LT(chi2, 20.5);  // 5 dof, 0.999 quantile
}

TEST(MaskedSampler, ReconstructAndReplayReproduceWeights) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.4);
  ScoreModel m(s, ScoreArch{{16}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.5, 2);
  Rng rng(6);
  const auto recs = sample_trajectories(m, s, 30, rng);
  for (const auto& r : recs) {
    const auto steps = reconstruct_states(r);
    ASSERT_EQ(steps.size(), 9u);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      EXPECT_EQ(std::count(steps[k].state.begin(), steps[k].state.end(), kMask), static_cast<long>(9 - k));
      EXPECT_EQ(steps[k].state[steps[k].position], kMask);
      EXPECT_EQ(steps[k].token, r.final[steps[k].position]);
    }
  }
  const auto rep = replay(m, s, recs);
  ASSERT_EQ(rep.calls.size(), 30u * 9);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_NEAR(rep.W[i], recs[i].log_weight, 1e-10);
}

TEST(MaskedSampler, RemaskExtremes) {
  Rng rng(7);
  const TokenSeq x{1, 2, 2, 1, 2};
  EXPECT_EQ(remask(x, 0.0, rng), x);
  EXPECT_EQ(remask(x, 1.0, rng), MaskedSeq(5, kMask));
  EXPECT_THROW(remask(x, 1.5, rng), Error);
}

TEST(MaskedSampler, RemaskCountIsBinomial) {
  Rng rng(8);
  const TokenSeq x(16, 2);
  const double lambda = 0.3;
  std::vector<int> hist(17, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto y = remask(x, lambda, rng);
    ++hist[std::count(y.begin(), y.end(), kMask)];
  }
  double chi2 = 0.0;
  int dof = -1;
  for (int k = 0; k <= 16; ++k) {
    const double p = std::exp(std::lgamma(17.0) - std::lgamma(k + 1.0) - std::lgamma(17.0 - k) + k * std::log(lambda) +
                              (16 - k) * std::log(1 - lambda));
    if (p * n < 5) continue;
    chi2 += (hist[k] - p * n) * (hist[k] - p * n) / (p * n);
    ++dof;
  }
  EXPECT_LT(chi2, dof + 5.0 * std::sqrt(2.0 * dof));
}

TEST(MaskedSampler, WeightsAreUnbiasedForZ) {
  const auto s = ModelSpec::ising(3, 1.0, 0.1, 0.28);
  const auto t = build_exact(s);
  ScoreModel m(s, ScoreArch{{16}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.3, 9);
  Rng rng(10);
  const auto recs = sample_trajectories(m, s, 100000, rng);
  double acc = 0.0;
  for (const auto& r : recs) acc += std::exp(r.log_weight - t.log_Z);
  EXPECT_NEAR(acc / recs.size(), 1.0, 0.03);
}

TEST(MaskedSampler, ResultsIndependentOfBatchChunking) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{8}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.5, 3);
  Rng a(11), b(11);
  const auto big = sample_trajectories(m, s, 5000, a);
  const auto small = sample_trajectories(m, s, 10, b);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(big[i].final, small[i].final);
    EXPECT_EQ(big[i].perm, small[i].perm);
    EXPECT_DOUBLE_EQ(big[i].log_weight, small[i].log_weight);
  }
}

TEST(MaskedSampler, EvaluateChunkedMatchesDirect) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{8}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.5, 4);
  Rng rng(12);
  std::vector<MaskedSeq> xs(5000, MaskedSeq(4));
  for (auto& x : xs)
    for (auto& t : x) t = static_cast<Token>(rng.below(3));
  std::vector<const MaskedSeq*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  std::vector<double> out;
  evaluate_chunked(m, ptrs, {}, out);
  ASSERT_EQ(out.size(), 5000u * 8);
  std::vector<double> one(8);
  for (std::size_t i : {0u, 2047u, 2048u, 4999u}) {
    m.evaluate(xs[i].data(), nullptr, 1, one.data());
    for (int k = 0; k < 8; ++k) EXPECT_DOUBLE_EQ(out[i * 8 + k], one[k]);
  }
}

TEST(MaskedSampler, RejectsMismatchedScore) {
  const auto s = ModelSpec::ising(3, 1.0, 0.0, 0.3);
  ScoreModel m(ModelSpec::ising(2, 1.0, 0.0, 0.3), ScoreArch{{8}, false, false}, 0);
  Rng rng(1);
  EXPECT_THROW(sample_trajectories(m, s, 1, rng), Error);
}
