#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "vpe/error.hpp"
#include "vpe/swarm_model.hpp"

using namespace vpe;

namespace {

ChannelModel unit_law(double range) {
  return {AttenuationLaw::UnitWithinRange, range, 1.0};
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a vpe::Error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(BuildGamma, TwoRobotsUnitLaw) {
  std::vector<RobotPose> p = {{0, {0, 0}}, {1, {1, 0}}};
  SparseMatrix g = build_gamma(p, unit_law(1.5));
  EXPECT_DOUBLE_EQ(g.coeff(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(g.coeff(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.coeff(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.coeff(1, 1), 0.0);
}

TEST(BuildGamma, OutOfRangeIsDisconnected) {
  std::vector<RobotPose> p = {{0, {0, 0}}, {1, {2, 0}}};
  EXPECT_EQ(code_of([&] { build_gamma(p, unit_law(1.5)); }), ErrorCode::DisconnectedSwarm);
}

TEST(BuildGamma, CoincidentRobots) {
  std::vector<RobotPose> p = {{0, {0.5, 0.5}}, {1, {0.5, 0.5}}};
  EXPECT_EQ(code_of([&] { build_gamma(p, unit_law(1.5)); }), ErrorCode::CoincidentRobots);
}

TEST(BuildGamma, InverseSquareChain) {
  std::vector<RobotPose> p = {{0, {0, 0}}, {1, {1, 0}}, {2, {2, 0}}};
  SparseMatrix g = build_gamma(p, {AttenuationLaw::InverseSquare, 1.5, 1.0});
  EXPECT_DOUBLE_EQ(g.coeff(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(g.coeff(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(g.coeff(1, 2), 1.0);
}

TEST(Attenuation, MonotoneAndCutOff) {
  for (auto law : {AttenuationLaw::UnitWithinRange, AttenuationLaw::InverseSquare,
                   AttenuationLaw::InverseLinear}) {
    ChannelModel c{law, 2.5, 0.7};
    double prev = c.attenuation(0.01);
    for (double d = 0.02; d <= 2.5; d += 0.01) {
      const double a = c.attenuation(d);
      EXPECT_LE(a, prev) << to_string(law) << " at " << d;
      prev = a;
    }
    EXPECT_EQ(c.attenuation(2.5001), 0.0);
  }
  ChannelModel inv{AttenuationLaw::InverseSquare, 5.0, 1.0};
  EXPECT_DOUBLE_EQ(inv.attenuation(2.0), 0.25);
  EXPECT_DOUBLE_EQ(inv.attenuation(0.5), 1.0);
}

TEST(GenerateScenario, LineHasIntegerPositions) {
  auto pos = generate_positions(ScenarioKind::Line, 4, 1.0, 7);
  ASSERT_EQ(pos.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(pos[i].x, i);
    EXPECT_DOUBLE_EQ(pos[i].y, 0.0);
  }
  EXPECT_EQ(generate_positions(ScenarioKind::Line, 4.2, 1.0, 7).size(), 5u);
}

TEST(GenerateScenario, AnnulusRadii) {
  auto pos = generate_positions(ScenarioKind::Annulus, 10, 1.0, 3);
  ASSERT_EQ(pos.size(), 100u);
  const double r = annulus_inner_radius(100, 1.0);
  for (auto p : pos) {
    const double d = norm(p);
    EXPECT_GE(d, r - 1e-12);
    EXPECT_LE(d, 2 * r + 1e-12);
  }
}

TEST(GenerateScenario, SquareMinimumDistance) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto pos = generate_positions(ScenarioKind::Square, 2, 1.0, seed);
    ASSERT_EQ(pos.size(), 4u);
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = i + 1; j < pos.size(); ++j) EXPECT_GE(distance(pos[i], pos[j]), 0.8);
  }
  auto big = generate_positions(ScenarioKind::RotatedSquare, 12, 1.0, 5);
  ASSERT_EQ(big.size(), 144u);
  for (std::size_t i = 0; i < big.size(); ++i)
    for (std::size_t j = i + 1; j < big.size(); ++j) ASSERT_GE(distance(big[i], big[j]), 0.8);
}

TEST(GenerateScenario, RejectsTinySizeFactor) {
  EXPECT_THROW(generate_positions(ScenarioKind::Square, 1.5, 1.0, 1), Error);
}

TEST(GenerateScenario, DeterministicPerSeed) {
  for (auto kind : {ScenarioKind::Square, ScenarioKind::RotatedSquare, ScenarioKind::Annulus}) {
    auto a = generate_positions(kind, 8, 1.0, 42);
    auto b = generate_positions(kind, 8, 1.0, 42);
    auto c = generate_positions(kind, 8, 1.0, 43);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i] == c[i]);
    EXPECT_TRUE(differs);
  }
}

TEST(GenerateScenario, GammaInvariantsOnEveryKind) {
  for (auto kind : {ScenarioKind::Line, ScenarioKind::Square, ScenarioKind::RotatedSquare,
                    ScenarioKind::Annulus}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto sc = generate_scenario(kind, 8, 1.0, seed);
      const SparseMatrix& g = sc.gamma();
      for (int i = 0; i < g.outerSize(); ++i) {
        EXPECT_EQ(g.coeff(i, i), 0.0);
        for (SparseMatrix::InnerIterator it(g, i); it; ++it) {
          EXPECT_GT(it.value(), 0.0);
          EXPECT_EQ(it.value(), g.coeff(it.col(), i));
        }
      }
      EXPECT_TRUE(is_connected(g));
    }
  }
}

TEST(SwarmScenario, R0OverrideAndWeightedMean) {
  auto pos = generate_positions(ScenarioKind::Line, 5, 1.0, 1);
  auto sc = SwarmScenario::from_positions(pos, unit_law(1.5));
  EXPECT_FALSE(sc.r0_overridden());
  EXPECT_DOUBLE_EQ(sc.r0(), 1.0);  // every link has length 1
  auto o = sc.with_r0(1.72);
  EXPECT_TRUE(o.r0_overridden());
  EXPECT_DOUBLE_EQ(o.r0(), 1.72);
}

TEST(SwarmScenario, SingleRobotAllowed) {
  std::vector<Vec2> one = {{0, 0}};
  auto sc = SwarmScenario::from_positions(one, unit_law(1.5));
  EXPECT_EQ(sc.size(), 1u);
}

TEST(ScenarioKind, ParseRoundTrip) {
  for (auto k : {ScenarioKind::Line, ScenarioKind::Square, ScenarioKind::RotatedSquare,
                 ScenarioKind::Annulus, ScenarioKind::Custom})
    EXPECT_EQ(parse_scenario_kind(to_string(k)), k);
  EXPECT_THROW(parse_scenario_kind("hexagon"), Error);
}
