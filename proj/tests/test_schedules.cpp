#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "controlvae/schedules.hpp"

using namespace controlvae;

TEST(CapacityStep, AppendixConstants) {
  const SetpointSchedule s = CapacityStep{0.5, 0.15, 5000, 18.0};
  EXPECT_DOUBLE_EQ(setpoint_at(s, 0), 0.5);
  EXPECT_DOUBLE_EQ(setpoint_at(s, 4999), 0.5);
  EXPECT_DOUBLE_EQ(setpoint_at(s, 5000), 0.65);
  EXPECT_DOUBLE_EQ(setpoint_at(s, 10'000'000), 18.0);
}

TEST(CapacityStep, NonDecreasingAndCapped) {
  const SetpointSchedule s = CapacityStep{0.5, 0.15, 5000, 18.0};
  double prev = setpoint_at(s, 0);
  for (std::int64_t t = 0; t <= 700'000; t += 250) {
    const double v = setpoint_at(s, t);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 18.0);
    prev = v;
  }
}

TEST(ConstantSetpoint, IsConstant) {
  const SetpointSchedule s = ConstantSetpoint{3.0};
  EXPECT_EQ(setpoint_at(s, 0), 3.0);
  EXPECT_EQ(setpoint_at(s, 123456), 3.0);
}

TEST(SetpointSchedule, Validation) {
  EXPECT_THROW(validate(SetpointSchedule{ConstantSetpoint{-1.0}}), InputError);
  EXPECT_THROW(validate(SetpointSchedule{CapacityStep{0.5, 0.0, 10, 1.0}}), InputError);
  EXPECT_THROW(validate(SetpointSchedule{CapacityStep{0.5, 0.1, 0, 1.0}}), InputError);
  EXPECT_THROW(validate(SetpointSchedule{CapacityStep{2.0, 0.1, 10, 1.0}}), InputError);
  EXPECT_NO_THROW(validate(SetpointSchedule{CapacityStep{}}));
}

TEST(BetaSchedule, ConstantBeta) {
  const BetaSchedule s = ConstantBeta{100.0};
  EXPECT_EQ(beta_at(s, 0), 100.0);
  EXPECT_EQ(beta_at(s, 99999), 100.0);
}

TEST(BetaSchedule, SigmoidMidpointAndShape) {
  const BetaSchedule s = SigmoidAnneal{20000, 0.001};
  EXPECT_DOUBLE_EQ(beta_at(s, 20000), 0.5);
  double prev = 0.0;
  for (std::int64_t t = 0; t <= 50000; t += 100) {
    const double b = beta_at(s, t);
    EXPECT_GT(b, 0.0);
    EXPECT_LT(b, 1.0);
    EXPECT_GE(b, prev);
    prev = b;
  }
  EXPECT_GT(beta_at(s, 60000), 1.0 - 1e-12);
}

TEST(BetaSchedule, SigmoidDefaultSlope) {
  const SigmoidAnneal s{20000, 0.0};
  EXPECT_DOUBLE_EQ(s.effective_slope(), 10.0 / 20000);
  EXPECT_DOUBLE_EQ(beta_at(BetaSchedule{s}, 20000), 0.5);
}

TEST(BetaSchedule, CyclicalRampAndHold) {
  const BetaSchedule s = CyclicalAnneal{4, 40000, 0.5};
  EXPECT_DOUBLE_EQ(beta_at(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(beta_at(s, 2500), 0.5);
  EXPECT_DOUBLE_EQ(beta_at(s, 5000), 1.0);
  EXPECT_DOUBLE_EQ(beta_at(s, 9999), 1.0);
  EXPECT_DOUBLE_EQ(beta_at(s, 10000), 0.0);
  for (std::int64_t t = 0; t < 30000; t += 37) {
    const double b = beta_at(s, t);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
    EXPECT_DOUBLE_EQ(b, beta_at(s, t + 10000));  // periodic
  }
}

TEST(BetaSchedule, CyclicalOverrunReturnsOne) {
  const BetaSchedule s = CyclicalAnneal{4, 40000, 0.5};
  EXPECT_FALSE(schedule_overrun(s, 39999));
  EXPECT_TRUE(schedule_overrun(s, 40000));
  EXPECT_EQ(beta_at(s, 40000), 1.0);
  EXPECT_EQ(beta_at(s, 1'000'000), 1.0);
}

TEST(BetaSchedule, Validation) {
  EXPECT_THROW(validate(BetaSchedule{ConstantBeta{-1.0}}), InputError);
  EXPECT_THROW(validate(BetaSchedule{SigmoidAnneal{0.0, 0.0}}), InputError);
  EXPECT_THROW(validate(BetaSchedule{CyclicalAnneal{0, 100, 0.5}}), InputError);
  EXPECT_THROW(validate(BetaSchedule{CyclicalAnneal{4, 100, 0.0}}), InputError);
}

TEST(Schedules, OutputsFinite) {
  const SetpointSchedule sp[] = {ConstantSetpoint{2.0}, CapacityStep{}};
  const BetaSchedule bs[] = {ConstantBeta{4.0}, SigmoidAnneal{50000, 0.0}, CyclicalAnneal{8, 80000, 0.5}};
  for (std::int64_t t : {0LL, 1LL, 4999LL, 5000LL, 79999LL, 1'000'000'000LL}) {
    for (const auto& s : sp) EXPECT_TRUE(std::isfinite(setpoint_at(s, t)) && setpoint_at(s, t) >= 0);
    for (const auto& s : bs) EXPECT_TRUE(std::isfinite(beta_at(s, t)) && beta_at(s, t) >= 0);
  }
}
