#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nhalf/checkpoint.hpp"
#include "nhalf/reference.hpp"
#include "oracles.hpp"

using namespace nhalf;

namespace {

ActivationParams bn_params(double gamma, double beta, double mu, double sigma_sq, double a = 1.0,
                           int clip = 31) {
  ActivationParams p;
  p.gamma = {gamma};
  p.beta = {beta};
  p.mu = {mu};
  p.sigma_sq = {sigma_sq};
  p.a = {a};
  p.epsilon = 0.0;
  p.clip = clip;
  return p;
}

}  // namespace

TEST(Sign, TieGoesPositive) {
  EXPECT_EQ(sign(0.0), 1);
  EXPECT_EQ(sign(-0.0), 1);
  EXPECT_EQ(sign(3.7), 1);
  EXPECT_EQ(sign(-0.001), -1);
}

TEST(Sign, RejectsNonFinite) {
  EXPECT_THROW(sign(std::numeric_limits<double>::quiet_NaN()), DomainError);
  EXPECT_THROW(sign(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(Hardtanh, Examples) {
  EXPECT_EQ(hardtanh(40, 31), 31);
  EXPECT_EQ(hardtanh(-40, 31), -31);
  EXPECT_EQ(hardtanh(5, 31), 5);
  EXPECT_THROW(hardtanh(1.0, 0), DomainError);
}

TEST(Prelu, Examples) {
  EXPECT_DOUBLE_EQ(prelu(-8, 0.25), -2);
  EXPECT_DOUBLE_EQ(prelu(8, 0.25), 8);
  EXPECT_DOUBLE_EQ(prelu(0, -3.0), 0);
  EXPECT_DOUBLE_EQ(prelu(0, 17.0), 0);
}

TEST(Batchnorm, Examples) {
  EXPECT_DOUBLE_EQ(batchnorm(7, bn_params(1, 0, 0, 1), 0), 7);
  EXPECT_DOUBLE_EQ(batchnorm(3, bn_params(2, 1, 3, 4), 0), 1);
  EXPECT_DOUBLE_EQ(batchnorm(5, bn_params(2, 1, 3, 4), 0), 3);
}

TEST(FuncReference, Examples) {
  const auto id = ActivationParams::identity(1);
  EXPECT_DOUBLE_EQ(func_reference(40, id, 0), 31);
  const auto p = bn_params(2, 1, 3, 4, 0.25);
  EXPECT_DOUBLE_EQ(func_reference(-5, p, 0), -3.25);
  EXPECT_DOUBLE_EQ(func_reference(32, p, 0), 29);
}

TEST(FuncReference, MatchesCompositionProperty) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 1'000'000; ++trial) {
    const int clip = fixture::random_clip(rng);
    const auto p = fixture::random_channel(rng, clip);
    const std::int64_t x = static_cast<std::int64_t>(rng() % (8 * clip + 1)) - 4 * clip;
    const double composed = batchnorm(prelu(hardtanh(static_cast<double>(x), clip), p.a[0]), p, 0);
    const double closed = func_reference(x, p, 0);
    // Relative to the magnitude of the terms being summed, so cancellation
    // near zero is not mistaken for a discrepancy.
    const double sd = std::sqrt(p.sigma_sq[0]);
    const double scale = std::max({1.0, std::fabs(p.beta[0]), std::fabs(p.gamma[0] * p.mu[0] / sd),
                                   std::fabs(p.gamma[0] * clip * std::max(1.0, std::fabs(p.a[0])) / sd)});
    ASSERT_LE(std::fabs(composed - closed), 1e-9 * scale) << "x=" << x << " trial=" << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 1'000'000);
}

TEST(Activation, IdempotenceAndIdentities) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-200.0, 200.0);
  const auto id = bn_params(1, 0, 0, 1);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    ASSERT_EQ(sign(sign(x)), sign(x));
    ASSERT_EQ(hardtanh(hardtanh(x, 31), 31), hardtanh(x, 31));
    ASSERT_EQ(prelu(x, 1.0), x);
    ASSERT_DOUBLE_EQ(batchnorm(x, id, 0), x);
  }
}

TEST(ActivationParams, Validation) {
  auto p = bn_params(1, 0, 0, 1);
  EXPECT_NO_THROW(p.validate());
  p.sigma_sq = {0.0};
  EXPECT_THROW(p.validate(), ConfigError);
  p.epsilon = 1e-5;
  EXPECT_NO_THROW(p.validate());
  p.sigma_sq = {-1.0};
  EXPECT_THROW(p.validate(), ConfigError);
  auto q = ActivationParams::identity(3);
  q.a = {0.5, 0.5};
  EXPECT_THROW(q.validate(), ConfigError);
  q.a = {0.5};
  EXPECT_NO_THROW(q.validate());
  EXPECT_DOUBLE_EQ(q.slope(2), 0.5);
}

TEST(ReferenceForward, IdentityParamsGiveSignOfPooled) {
  const auto cfg = fixture::small_config();
  const auto ck = identity_checkpoint(cfg, 3);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = oracle::random_pm1(cfg.input_h * cfg.input_w, rng);
    const auto r = reference_forward(std::span<const int>(img), ck);
    ASSERT_EQ(r.blocks.size(), cfg.blocks.size());
    for (std::size_t b = 0; b + 1 < r.blocks.size(); ++b) {
      const auto& t = r.blocks[b];
      ASSERT_EQ(t.binary.size(), t.pooled.values.size());
      for (std::size_t i = 0; i < t.binary.size(); ++i)
        ASSERT_EQ(t.binary[i], sign(t.pooled.values[i])) << "block " << b + 1;
    }
  }
}

TEST(ReferenceForward, ConvMatchesDirectOracleOnFirstBlock) {
  const auto cfg = fixture::small_config();
  const auto ck = random_checkpoint(cfg, 4);
  std::mt19937_64 rng(14);
  const auto img = oracle::random_pm1(144, rng);
  const auto r = reference_forward(std::span<const int>(img), ck);
  std::vector<int> w(ck.blocks[0].weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = sign(ck.blocks[0].weights[i]);
  const oracle::Conv g{1, 12, 12, 3, 3, 1, 1, 1, 1};
  const auto want = g.direct(img, w, 4);
  ASSERT_EQ(r.blocks[0].conv.values.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(r.blocks[0].conv.values[i], want[i]);
}

TEST(ReferenceForward, ScoresShapeAndFinite) {
  const auto cfg = fixture::small_config();
  const auto ck = random_checkpoint(cfg, 5);
  std::mt19937_64 rng(15);
  const auto img = oracle::random_pm1(144, rng);
  OpCounters c;
  const auto r = reference_forward(std::span<const int>(img), ck, &c);
  ASSERT_EQ(r.scores.size(), cfg.class_count);
  for (double s : r.scores) EXPECT_TRUE(std::isfinite(s));
  EXPECT_LT(r.predicted, cfg.class_count);
  EXPECT_GT(c.float_ops, 0u);
  EXPECT_GE(r.top2_margin(), 0.0);
}

TEST(ReferenceForward, RejectsWrongInputSize) {
  const auto ck = identity_checkpoint(fixture::small_config());
  const std::vector<int> img(100, 1);
  EXPECT_THROW(reference_forward(std::span<const int>(img), ck), ConfigError);
}
