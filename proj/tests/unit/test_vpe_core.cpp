#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vpe/error.hpp"
#include "vpe/spectral.hpp"
#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

using namespace vpe;

namespace {

ChannelModel unit_law(double range) { return {AttenuationLaw::UnitWithinRange, range, 1.0}; }

SwarmScenario line(int n, double range = 1.5) {
  return SwarmScenario::from_positions(generate_positions(ScenarioKind::Line, n, 1.0, 0),
                                       unit_law(range));
}

SwarmScenario pair() {
  std::vector<Vec2> p = {{0, 0}, {1, 0}};
  return SwarmScenario::from_positions(p, unit_law(1.5));
}

VpeParams unit_params(double k1 = 0.05, double k = 0.15) {
  VpeParams p;
  p.k1 = k1;
  p.k = k;
  p.variant = TransferVariant::UnitDirection;
  return p;
}

}  // namespace

TEST(TransitionProbabilities, TwoRobotExample) {
  SparseMatrix p = transition_probabilities(pair(), unit_params(), +1);
  EXPECT_NEAR(p.coeff(0, 1), 0.05 * std::exp(-0.15), 1e-15);
  EXPECT_NEAR(p.coeff(1, 0), 0.05 * std::exp(0.15), 1e-15);
  EXPECT_NEAR(p.coeff(0, 1), 0.043035, 5e-7);
  EXPECT_NEAR(p.coeff(1, 0), 0.058092, 5e-7);
  EXPECT_EQ(p.coeff(0, 0), 0.0);
}

TEST(TransitionProbabilities, IsotropicWhenKIsZero) {
  auto sc = generate_scenario(ScenarioKind::Square, 5, 1.0, 3);
  auto params = unit_params(0.05, 0.0);
  SparseMatrix p = transition_probabilities(sc, params, +1);
  const SparseMatrix& g = sc.gamma();
  for (int i = 0; i < g.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(g, i); it; ++it)
      EXPECT_DOUBLE_EQ(p.coeff(i, it.col()), it.value() * 0.05);
}

TEST(TransitionProbabilities, ExcessiveTransferReportsWorstRobot) {
  std::vector<Vec2> star = {{-1, 0}, {0, 0}, {1, 0}};
  auto sc = SwarmScenario::from_positions(star, unit_law(1.5));
  try {
    transition_probabilities(sc, unit_params(0.6), +1);
    FAIL() << "expected ExcessiveTransfer";
  } catch (const ExcessiveTransferError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ExcessiveTransfer);
    EXPECT_EQ(e.robot(), 1);
    EXPECT_NEAR(e.exit_sum(), 0.6 * (std::exp(0.15) + std::exp(-0.15)), 1e-12);
  }
}

TEST(TransitionProbabilities, MinusFieldMirrors) {
  SparseMatrix plus = transition_probabilities(pair(), unit_params(), +1);
  SparseMatrix minus = transition_probabilities(pair(), unit_params(), -1);
  EXPECT_DOUBLE_EQ(plus.coeff(0, 1), minus.coeff(1, 0));
  EXPECT_DOUBLE_EQ(plus.coeff(1, 0), minus.coeff(0, 1));
}

TEST(VpeStep, SingleRobotUnchanged) {
  std::vector<Vec2> one = {{0, 0}};
  auto sc = SwarmScenario::from_positions(one, unit_law(1.5));
  TransferOperator tp(transition_probabilities(sc, unit_params(), +1));
  TransferOperator tm(transition_probabilities(sc, unit_params(), -1));
  VpeState s = vpe_step(VpeState::uniform(1), tp, tm);
  EXPECT_EQ(s.xi_plus(0), 1.0);
  EXPECT_EQ(s.xi_minus(0), 1.0);
  EXPECT_EQ(s.iteration, 1);
}

TEST(VpeStep, TwoRobotExample) {
  TransferOperator tp(transition_probabilities(pair(), unit_params(), +1));
  TransferOperator tm(transition_probabilities(pair(), unit_params(), -1));
  VpeState s = vpe_step(VpeState::uniform(2), tp, tm);
  EXPECT_NEAR(s.xi_plus(0), 1.015057, 1e-6);
  EXPECT_NEAR(s.xi_plus(1), 0.984943, 1e-6);
  EXPECT_NEAR(s.xi_minus(0), 0.984943, 1e-6);
  EXPECT_NEAR(s.xi_minus(1), 1.015057, 1e-6);
}

TEST(VpeStep, ConservationAndPositivity) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  auto sc = generate_scenario(ScenarioKind::Annulus, 6, 1.0, 4);
  TransferOperator tp(transition_probabilities(sc, unit_params(), +1));
  TransferOperator tm(transition_probabilities(sc, unit_params(), -1));
  VpeState s = VpeState::uniform(sc.size());
  for (Eigen::Index i = 0; i < s.xi_plus.size(); ++i) {
    s.xi_plus(i) = u(rng);
    s.xi_minus(i) = u(rng);
  }
  const double sp = s.xi_plus.sum(), sm = s.xi_minus.sum();
  for (int n = 0; n < 2000; ++n) s = vpe_step(s, tp, tm);
  EXPECT_NEAR(s.xi_plus.sum(), sp, 1e-12 * sp * 2000);
  EXPECT_NEAR(s.xi_minus.sum(), sm, 1e-12 * sm * 2000);
  EXPECT_GT(s.xi_plus.minCoeff(), 0.0);
  EXPECT_GT(s.xi_minus.minCoeff(), 0.0);
}

TEST(VpeStep, FieldsAreIndependent) {
  auto sc = generate_scenario(ScenarioKind::Square, 5, 1.0, 8);
  TransferOperator tp(transition_probabilities(sc, unit_params(), +1));
  TransferOperator tm(transition_probabilities(sc, unit_params(), -1));
  VpeState s = VpeState::uniform(sc.size());
  Eigen::VectorXd a = s.xi_plus, b = s.xi_minus;
  for (int n = 0; n < 300; ++n) {
    s = vpe_step(s, tp, tm);
    a = tp.apply(a);
  }
  for (int n = 0; n < 300; ++n) b = tm.apply(b);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    EXPECT_EQ(s.xi_plus(i), a(i));
    EXPECT_EQ(s.xi_minus(i), b(i));
  }
}

TEST(Normalize, Examples) {
  Eigen::VectorXd a(3), b(3), c(2);
  a << 2, 2, 2;
  b << 1, 2, 3;
  c << 1e-8, 1e-8;
  Eigen::VectorXd na = normalize(a), nb = normalize(b), nc = normalize(c);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(na(i), 1.0, 1e-15);
  EXPECT_NEAR(nb(0), 0.5, 1e-15);
  EXPECT_NEAR(nb(1), 1.0, 1e-15);
  EXPECT_NEAR(nb(2), 1.5, 1e-15);
  EXPECT_NEAR(nc(0), 1.0, 1e-15);
  EXPECT_NEAR(nc(1), 1.0, 1e-15);
}

TEST(ExtractPositions, Examples) {
  const double k = 0.15;
  VpeState s = VpeState::uniform(4);
  s.xi_plus << 0.3, 1.7, 2.0, 0.9;
  s.xi_minus = s.xi_plus;
  Eigen::VectorXd chi = extract_positions(s, 1.0, k);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(chi(i), 0.0);

  Eigen::VectorXd x(4);
  x << -1.5, 0.25, 2.0, 3.75;
  s.xi_plus = (-2 * k * x).array().exp();
  s.xi_minus = (2 * k * x).array().exp();
  chi = extract_positions(s, 1.0, k);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(chi(i), x(i), 1e-12);

  const double c = 3.0, r0 = 1.3;
  Eigen::VectorXd before = extract_positions(s, r0, k);
  s.xi_plus *= c;
  Eigen::VectorXd after = extract_positions(s, r0, k);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(after(i) - before(i), -r0 * std::log(c) / (4 * k), 1e-12);
}

TEST(ExtractSingle, MatchesFormula) {
  Eigen::VectorXd xi(3);
  xi << 0.5, 1.0, 2.0;
  Eigen::VectorXd chi = extract_single(xi, 1.2, 0.15);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(chi(i), -1.2 * std::log(xi(i)) / 0.3, 1e-14);
}

TEST(RunLocalization, FiveRobotLine) {
  auto sc = line(5);
  auto params = unit_params();
  Eigen::VectorXd ref = equilibrium_positions(sc, params);
  RunReport r = run_localization(sc, params, StopCriterion::oracle(ref, std::nullopt));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.max_error, 0.15);
  EXPECT_LE(r.mean_error, r.max_error);
  for (std::size_t i = 1; i < r.error_trace.size(); ++i)
    EXPECT_LT(r.error_trace[i - 1].iteration, r.error_trace[i].iteration);
}

TEST(RunLocalization, SingleRobot) {
  std::vector<Vec2> one = {{3, 4}};
  auto sc = SwarmScenario::from_positions(one, unit_law(1.5));
  Eigen::VectorXd ref = Eigen::VectorXd::Zero(1);
  RunReport r = run_localization(sc, unit_params(), StopCriterion::oracle(ref, std::nullopt));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.converged_at, 0);
  EXPECT_EQ(r.chi_x(0), 0.0);
}

TEST(RunLocalization, ExactDisplacementChain) {
  std::vector<Vec2> p = {{0, 0}, {1, 0}, {2.5, 0}};
  auto sc = SwarmScenario::from_positions(p, {AttenuationLaw::InverseSquare, 2.0, 1.0});
  VpeParams params;
  params.variant = TransferVariant::ExactDisplacement;
  params.k0 = 0.05;
  Eigen::VectorXd ref = equilibrium_positions(sc, params);
  RunReport r = run_localization(sc, params, StopCriterion::oracle(ref, std::nullopt, 1e-9));
  ErrorSample e = localization_error(sc, r.chi_x, nullptr);
  EXPECT_LT(e.max_error, 1e-6);
}

TEST(RunLocalization, InitialStateIndependence) {
  auto sc = generate_scenario(ScenarioKind::Square, 5, 1.0, 2);
  auto params = unit_params();
  params.normalize_every = 0;
  StopCriterion stop = StopCriterion::fixed(6000);
  RunReport a = run_localization(sc, params, stop);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 1.8);
  VpeState init = VpeState::uniform(sc.size());
  for (Eigen::Index i = 0; i < init.xi_plus.size(); ++i) {
    init.xi_plus(i) = u(rng);
    init.xi_minus(i) = u(rng);
  }
  const double l = static_cast<double>(sc.size());
  init.xi_plus *= l / init.xi_plus.sum();
  init.xi_minus *= l / init.xi_minus.sum();
  RunOptions opts;
  opts.initial_x = init;
  RunReport b = run_localization(sc, params, stop, opts);
  EXPECT_LT((a.chi_x - b.chi_x).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RunLocalization, OrderingMatchesOnChain) {
  auto sc = line(12, 2.5);
  auto params = unit_params();
  Eigen::VectorXd ref = equilibrium_positions(sc, params);
  for (int i = 1; i < 12; ++i) EXPECT_GT(ref(i), ref(i - 1));
  Eigen::Index lo, hi;
  ref.minCoeff(&lo);
  ref.maxCoeff(&hi);
  EXPECT_EQ(lo, 0);
  EXPECT_EQ(hi, 11);
}

TEST(RunLocalization, GeometricRateBoundedByLambda2) {
  auto sc = line(10);
  auto params = unit_params();
  TransitionMatrix t = build_transition_matrix(transition_probabilities(sc, params, +1));
  SpectralSummary s = perron_oracle(t, 10.0, 1.0, params.k);
  TransferOperator op(transition_probabilities(sc, params, +1));
  Eigen::VectorXd xi = Eigen::VectorXd::Ones(10);
  for (int n = 0; n < 1000; ++n) xi = op.apply(xi);
  const double e0 = (xi - s.equilibrium_xi).norm();
  for (int n = 0; n < 100; ++n) xi = op.apply(xi);
  const double e1 = (xi - s.equilibrium_xi).norm();
  EXPECT_LE(e1 / e0, std::pow(s.lambda2_abs, 100) * (1 + 1e-3));
}

TEST(RunLocalization, BudgetExceededThrows) {
  auto sc = line(30);
  auto params = unit_params();
  Eigen::VectorXd ref = equilibrium_positions(sc, params);
  try {
    run_localization(sc, params, StopCriterion::oracle(ref, std::nullopt, 0.1, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxIterationsExceeded);
  }
}

TEST(RunLocalization, SlidingWindowConverges) {
  auto sc = line(8);
  RunReport r = run_localization(sc, unit_params(), StopCriterion::sliding(200, 0.1));
  EXPECT_TRUE(r.converged);
  EXPECT_GE(r.converged_at, 200);
}

TEST(RunLocalization, BeaconsHoldTheirValue) {
  auto sc = line(6);
  RunOptions opts;
  opts.beacons = {{0, {0, 0}}};
  RunReport r = run_localization(sc, unit_params(), StopCriterion::fixed(50), opts);
  EXPECT_NEAR(r.final_x.xi_plus(0), 1.0, 1e-12);
}

TEST(VpeParams, ValidateRejectsNonPositive) {
  VpeParams p;
  p.k = -1;
  EXPECT_THROW(p.validate(), Error);
  p = VpeParams{};
  p.normalize_every = -1;
  EXPECT_THROW(p.validate(), Error);
}
