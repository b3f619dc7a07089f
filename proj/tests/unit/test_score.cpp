#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"
#include "mdns/losses.hpp"
#include "mdns/score.hpp"
#include "test_support.hpp"

using namespace mdns;

namespace {

std::vector<Token> random_states(const ModelSpec& s, std::size_t count, Rng& rng, bool allow_mask) {
  std::vector<Token> xs(count * s.sites());
  for (auto& t : xs) t = static_cast<Token>(allow_mask ? rng.below(s.N + 1) : 1 + rng.below(s.N));
  return xs;
}

// A fixed linear functional of the score on a few queries.
LossOutput linear_probe(const ModelSpec& s, bool timed, std::uint64_t seed) {
  Rng rng(seed);
  LossOutput out;
  const int DN = s.sites() * s.N;
  for (int q = 0; q < 3; ++q) {
    AdjointCall c;
    c.state.resize(s.sites());
    for (auto& t : c.state) t = static_cast<Token>(rng.below(s.N + 1));
    if (timed) c.t = 0.2 + 0.8 * rng.uniform();
    for (int i = 0; i < DN; ++i)
      if (rng.uniform() < 0.5) c.adjoint.push_back({i, 2.0 * rng.uniform() - 1.0});
    out.calls.push_back(std::move(c));
  }
  return out;
}

double probe_value(ScoreModel& m, const LossOutput& probe) {
  double v = 0.0;
  std::vector<double> s(m.sites() * m.vocab());
  for (const auto& c : probe.calls) {
    m.evaluate(c.state.data(), std::isnan(c.t) ? nullptr : &c.t, 1, s.data());
    for (const auto& [i, a] : c.adjoint) v += a * s[i];
  }
  return v;
}

std::size_t tensor_offset(const ScoreModel& m, const std::string& name) {
  for (const auto& t : m.tensors())
    if (t.name == name) return t.offset;
  ADD_FAILURE() << "no tensor " << name;
  return 0;
}

}  // namespace

TEST(Score, FreshModelIsUniform) {
  const auto s = ModelSpec::potts(3, 3, 1.0, 1.0);
  ScoreModel m(s, ScoreArch{{16, 16}, false, false}, 1);
  Rng rng(1);
  const auto xs = random_states(s, 5, rng, true);
  std::vector<double> out(5 * 9 * 3);
  m.evaluate(xs.data(), nullptr, 5, out.data());
  for (double v : out) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Score, FreshUdnsHeadIsOne) {
  const auto s = ModelSpec::ising(3, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{16}, true, true}, 1);
  Rng rng(2);
  const auto xs = random_states(s, 4, rng, false);
  const std::vector<double> t{0.2, 0.5, 0.9, 1.0};
  std::vector<double> out(4 * 18);
  m.evaluate(xs.data(), t.data(), 4, out.data());
  for (double v : out) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_DOUBLE_EQ(m.sigma(0.5), 0.0);
}

TEST(Score, InitDeterministicPerSeed) {
  const auto s = ModelSpec::ising(3, 1.0, 0.0, 0.3);
  ScoreModel a(s, ScoreArch{}, 9), b(s, ScoreArch{}, 9), c(s, ScoreArch{}, 10);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  EXPECT_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}

TEST(Score, ParameterCount) {
  const auto s = ModelSpec::ising(4, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{128, 128}, false, false}, 0);
  const std::size_t expect = 16 * 3 * 128 + 128 + 128 * 128 + 128 + 128 * 32 + 32;
  EXPECT_EQ(m.param_count(), expect);
  std::size_t total = 0;
  for (const auto& t : m.tensors()) total += t.size;
  EXPECT_EQ(total, expect);

  ScoreModel u(s, ScoreArch{{128, 128}, true, true}, 0);
  const std::size_t sigma = 2 * 32 + 32 + 2 * (32 * 32 + 32) + 32 + 1;
  EXPECT_EQ(u.param_count(), expect + 2 * 128 + sigma);
}

TEST(Score, RowsSumToOneAfterPerturbation) {
  const auto s = ModelSpec::potts(3, 4, 1.0, 1.0);
  ScoreModel m(s, ScoreArch{{20, 12}, false, false}, 2);
  mdns::testing::perturb_params(m, 0.5, 3);
  Rng rng(4);
  const auto xs = random_states(s, 6, rng, true);
  std::vector<double> out(6 * 9 * 4);
  m.evaluate(xs.data(), nullptr, 6, out.data());
  for (std::size_t r = 0; r < 6 * 9; ++r) {
    double tot = 0.0;
    for (int n = 0; n < 4; ++n) {
      EXPECT_GT(out[r * 4 + n], 0.0);
      tot += out[r * 4 + n];
    }
    EXPECT_NEAR(tot, 1.0, 1e-12);
  }
}

TEST(Score, PreconditionedFreshModelGivesSingleSiteConditional) {
  const auto s = ModelSpec::ising(4, 1.0, 0.0, 0.28);
  ScoreModel m(s, ScoreArch{{16}, false, true}, 0);
  MaskedSeq x(16, 2);
  x[5] = kMask;
  std::vector<double> out(32);
  m.evaluate(x.data(), nullptr, 1, out.data());
  EXPECT_NEAR(out[5 * 2 + 1], 0.9037, 1e-4);
  MaskedSeq all(16, kMask);
  m.evaluate(all.data(), nullptr, 1, out.data());
  EXPECT_DOUBLE_EQ(out[0], 0.5);
}

TEST(Score, PreconditioningNeedsIsing) {
  EXPECT_THROW(ScoreModel(ModelSpec::potts(3, 3, 1.0, 1.0), ScoreArch{{8}, false, true}, 0), Error);
  EXPECT_THROW(ScoreModel(ModelSpec::ising(3, 1.0, 0.0, 1.0), ScoreArch{{}, false, false}, 0), Error);
}

TEST(Score, TimeArgumentMustMatchArchitecture) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel plain(s, ScoreArch{{8}, false, false}, 0), timed(s, ScoreArch{{8}, true, false}, 0);
  const TokenSeq x{1, 2, 1, 2};
  const double t = 0.5;
  std::vector<double> out(8);
  EXPECT_THROW(plain.evaluate(x.data(), &t, 1, out.data()), Error);
  EXPECT_THROW(timed.evaluate(x.data(), nullptr, 1, out.data()), Error);
}

TEST(Score, ZeroAdjointLeavesGradientsUnchanged) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{8}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.3, 1);
  auto probe = linear_probe(s, false, 5);
  for (auto& c : probe.calls)
    for (auto& a : c.adjoint) a.second = 0.0;
  GradBuffer g = m.make_grads();
  std::iota(g.begin(), g.end(), 0.0);
  const GradBuffer before = g;
  backprop(m, probe, g);
  EXPECT_EQ(g, before);
}

TEST(Score, BackwardMatchesFiniteDifferences) {
  for (bool timed : {false, true}) {
    const auto s = ModelSpec::ising(2, 1.0, 0.1, 0.5);
    ScoreModel m(s, ScoreArch{{8, 6}, timed, timed}, 3);
    mdns::testing::perturb_params(m, 0.4, 4);
    const auto probe = linear_probe(s, timed, 6);
    const auto rep = mdns::testing::finite_difference_check(
        m, [&](ScoreModel&) { return probe; }, [&](ScoreModel& mm) { return probe_value(mm, probe); });
    EXPECT_GE(rep.tensors_checked, timed ? 10u : 5u);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "timed=" << timed;
  }
}

TEST(Score, BackwardIsLinearInAdjoint) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{8}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.3, 2);
  const auto a = linear_probe(s, false, 10);
  auto b = a;
  for (auto& c : b.calls)
    for (auto& e : c.adjoint) e.second *= -2.5;
  GradBuffer ga = m.make_grads(), gb = m.make_grads();
  backprop(m, a, ga);
  backprop(m, b, gb);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(gb[i], -2.5 * ga[i], 1e-12 * (1 + std::abs(ga[i])));
}

TEST(Score, EmbeddingGradientOnlyTouchesObservedTokens) {
  const auto s = ModelSpec::ising(2, 1.0, 0.0, 0.3);
  ScoreModel m(s, ScoreArch{{8}, false, false}, 0);
  mdns::testing::perturb_params(m, 0.3, 2);
  LossOutput probe;
  probe.calls.push_back({MaskedSeq{kMask, 2, 1, kMask}, NAN, {{0, 1.0}, {7, -0.5}}});
  GradBuffer g = m.make_grads();
  backprop(m, probe, g);
  const std::size_t off = tensor_offset(m, "embed");
  for (int d = 0; d < 4; ++d)
    for (int tok = 0; tok < 3; ++tok) {
      const bool used = probe.calls[0].state[d] == tok;
      double norm = 0.0;
      for (int h = 0; h < 8; ++h) norm += std::abs(g[off + (d * 3 + tok) * 8 + h]);
      if (used)
        EXPECT_GT(norm, 0.0);
      else
        EXPECT_EQ(norm, 0.0);
    }
}

TEST(Score, UdnsUnitSigmaGivesTargetRatio) {
  const auto s = ModelSpec::ising(4, 1.0, 0.0, 0.28);
  ScoreModel m(s, ScoreArch{{16}, true, true}, 0);
  m.mutable_params()[tensor_offset(m, "sigma_b3")] = 1.0f;
  EXPECT_DOUBLE_EQ(m.sigma(0.3), 1.0);
  const TokenSeq x(16, 2);
  const double t = 0.6;
  std::vector<double> out(32);
  m.evaluate(x.data(), &t, 1, out.data());
  for (int d = 0; d < 16; ++d) {
    EXPECT_NEAR(std::log(out[d * 2]), -2.24, 1e-12);
    EXPECT_DOUBLE_EQ(out[d * 2 + 1], 1.0);
  }
}

TEST(Score, PreconditionBetaOverride) {
  const auto s = ModelSpec::ising(4, 1.0, 0.0, 0.6);
  ScoreModel m(s, ScoreArch{{8}, false, true}, 0);
  EXPECT_DOUBLE_EQ(m.precondition_beta(), 0.6);
  m.set_precondition_beta(0.28);
  MaskedSeq x(16, 2);
  x[0] = kMask;
  std::vector<double> out(32);
  m.evaluate(x.data(), nullptr, 1, out.data());
  EXPECT_NEAR(out[1], 0.9037, 1e-4);
}

TEST(Score, ArchJsonRoundTrip) {
  const ScoreArch a{{64, 32, 16}, true, true};
  EXPECT_EQ(nlohmann::json(a).get<ScoreArch>(), a);
}
