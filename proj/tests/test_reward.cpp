#include <gtest/gtest.h>

#include <vector>

#include <dynamix/reward.hpp>

#include "fixture_check.hpp"

using namespace dynamix;

TEST(Reward, MinimumBatchHasNoRegularization) {
  RewardCoefficients c;
  c.delta = 0.37;
  const auto r = reward_sgd(0.6, 0.1, 0.4, 32, c);
  EXPECT_EQ(r.components.regularization, 0.0);
  EXPECT_DOUBLE_EQ(r.value, 0.6 + c.alpha * 0.1 - c.beta * 0.4);
}

TEST(Reward, NegativeGainIsNeutral) {
  RewardCoefficients c;
  c.alpha = 2.0;
  EXPECT_EQ(reward_sgd(0.8, -0.1, 0.5, 64, c).components.gain, 0.0);
}

TEST(Reward, HandEvaluatedSgd) {
  RewardCoefficients c;
  c.alpha = 1.0;
  c.beta = 0.4;
  c.delta = 0.05;
  const auto r = reward_sgd(0.8, 0.02, 0.5, 128, c);
  EXPECT_NEAR(r.value, 0.52, 1e-12);
  EXPECT_NEAR(r.components.time, -0.2, 1e-15);
  EXPECT_NEAR(r.components.regularization, -0.1, 1e-15);
  EXPECT_EQ(r.regime, RewardRegime::sgd);
}

TEST(Reward, AdaptivePenalty) {
  RewardCoefficients c;
  c.eta = 1.0;
  const double base = reward_sgd(0.7, 0.05, 0.3, 256, c).value;
  EXPECT_NEAR(reward_adaptive(0.7, 0.05, 0.3, 0.3, 0.09, 256, c).value, base - 0.39, 1e-12);
  EXPECT_DOUBLE_EQ(reward_adaptive(0.7, 0.05, 0.3, 0.0, 0.0, 256, c).value, base);
  c.eta = 0.0;
  for (double s : {0.1, 0.5, 3.0})
    EXPECT_DOUBLE_EQ(reward_adaptive(0.7, 0.05, 0.3, s, s * s, 256, c).value, reward_sgd(0.7, 0.05, 0.3, 256, c).value);
}

TEST(Reward, ComponentsSumToValue) {
  Rng rng(4);
  RewardCoefficients c;
  for (int i = 0; i < 200; ++i) {
    const int b = 32 + static_cast<int>(uniform01(rng) * 992);
    const auto r = reward_adaptive(uniform01(rng), uniform01(rng) - 0.5, 0.01 + uniform01(rng), uniform01(rng),
                                   uniform01(rng), b, c);
    EXPECT_DOUBLE_EQ(r.value, r.components.sum());
    EXPECT_LE(r.components.time, 0.0);
    EXPECT_LE(r.components.regularization, 0.0);
    EXPECT_LE(r.components.normalization, 0.0);
    EXPECT_GE(r.components.gain, 0.0);
  }
}

TEST(Reward, MonotoneInItsInputs) {
  RewardCoefficients c;
  EXPECT_LT(reward_sgd(0.5, 0.1, 0.3, 64, c).value, reward_sgd(0.6, 0.1, 0.3, 64, c).value);
  EXPECT_GT(reward_sgd(0.5, 0.1, 0.3, 64, c).value, reward_sgd(0.5, 0.1, 0.4, 64, c).value);
  EXPECT_GT(reward_sgd(0.5, 0.1, 0.3, 64, c).value, reward_sgd(0.5, 0.1, 0.3, 128, c).value);
  EXPECT_LT(reward_sgd(0.5, 0.1, 0.3, 64, c).value, reward_sgd(0.5, 0.2, 0.3, 64, c).value);
}

TEST(Reward, RejectsOutOfRangeInputs) {
  RewardCoefficients c;
  EXPECT_THROW(reward_sgd(0.5, 0.0, 0.3, 16, c), ContractViolation);
  EXPECT_THROW(reward_sgd(0.5, 0.0, 0.3, 2048, c), ContractViolation);
  EXPECT_THROW(reward_sgd(0.5, 0.0, 0.0, 64, c), ContractViolation);
  EXPECT_THROW(reward_adaptive(0.5, 0.0, 0.3, -0.1, 0.01, 64, c), ContractViolation);
  RewardCoefficients bad;
  bad.gamma = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.beta = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Reward, DiscountedReturnExamples) {
  EXPECT_DOUBLE_EQ(discounted_return(std::vector<double>{2.5, 9.0, 9.0}, 0.0), 2.5);
  EXPECT_DOUBLE_EQ(discounted_return(std::vector<double>{1, 1, 1}, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(discounted_return(std::vector<double>{1, 2, 4}, 0.5), 3.0);
  EXPECT_EQ(discounted_return(std::vector<double>{}, 0.9), 0.0);
}

TEST(Reward, CoefficientJsonRoundTrip) {
  RewardCoefficients c;
  c.alpha = 1.25;
  c.gamma = 0.9;
  const nlohmann::json j = c;
  const auto back = j.get<RewardCoefficients>();
  EXPECT_EQ(back.alpha, 1.25);
  EXPECT_EQ(back.gamma, 0.9);
  EXPECT_EQ(parse_regime("adaptive"), RewardRegime::adaptive);
  EXPECT_THROW(parse_regime("adam"), ConfigError);
}

// Every formula against the independent oracle fixture.
TEST(FormulaOracle, MatchesIndependentScript) {
  const auto results = fixture::check_all(fixture::load(DYNAMIX_FIXTURE));
  ASSERT_EQ(results.size(), 6u);
  for (const auto& [name, r] : results) {
    SCOPED_TRACE(name);
    EXPECT_GE(r.cases, 100);
    EXPECT_LE(r.max_abs_error, 1e-10);
    EXPECT_EQ(r.exact_mismatches, 0);
  }
}
