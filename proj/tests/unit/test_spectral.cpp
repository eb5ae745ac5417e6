#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "chain_bound.hpp"
#include "vpe/error.hpp"
#include "vpe/spectral.hpp"
#include "vpe/vpe_core.hpp"

using namespace vpe;

namespace {

const double kE1 = 0.05 * std::exp(-0.15);
const double kE2 = 0.05 * std::exp(0.15);

SwarmScenario pair() {
  std::vector<Vec2> p = {{0, 0}, {1, 0}};
  return SwarmScenario::from_positions(p, {AttenuationLaw::UnitWithinRange, 1.5, 1.0});
}

VpeParams unit_params() {
  VpeParams p;
  p.k1 = 0.05;
  p.k = 0.15;
  return p;
}

}  // namespace

TEST(TransitionMatrix, SingleRobot) {
  SparseMatrix p(1, 1);
  TransitionMatrix t = build_transition_matrix(p);
  EXPECT_EQ(t.size(), 1);
  EXPECT_EQ(t.t.coeff(0, 0), 1.0);
}

TEST(TransitionMatrix, TwoRobotExample) {
  TransitionMatrix t = build_transition_matrix(transition_probabilities(pair(), unit_params(), +1));
  EXPECT_NEAR(t.t.coeff(0, 0), 0.956965, 1e-6);
  EXPECT_NEAR(t.t.coeff(0, 1), 0.058092, 1e-6);
  EXPECT_NEAR(t.t.coeff(1, 0), 0.043035, 1e-6);
  EXPECT_NEAR(t.t.coeff(1, 1), 0.941908, 1e-6);
}

TEST(TransitionMatrix, ColumnsSumToOne) {
  auto sc = generate_scenario(ScenarioKind::Annulus, 8, 1.0, 5);
  TransitionMatrix t = build_transition_matrix(transition_probabilities(sc, unit_params(), -1), -1);
  Eigen::MatrixXd d = t.dense();
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    EXPECT_NEAR(d.col(j).sum(), 1.0, 1e-12);
    EXPECT_GT(d(j, j), 0.0);
  }
  EXPECT_GE(d.minCoeff(), 0.0);
}

TEST(TransitionMatrix, NotIrreducible) {
  SparseMatrix p(2, 2);
  p.insert(0, 1) = 0.1;
  try {
    build_transition_matrix(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotIrreducible);
  }
}

TEST(PerronOracle, SymmetricPair) {
  SparseMatrix p(2, 2);
  p.insert(0, 1) = 0.07;
  p.insert(1, 0) = 0.07;
  SpectralSummary s = perron_oracle(build_transition_matrix(p), 2.0, 1.0, 0.15);
  EXPECT_NEAR(s.perron_vector(0), 0.5, 1e-14);
  EXPECT_NEAR(s.perron_vector(1), 0.5, 1e-14);
  EXPECT_LE(s.residual, 1e-10);
}

TEST(PerronOracle, AsymmetricPairByHand) {
  TransitionMatrix t = build_transition_matrix(transition_probabilities(pair(), unit_params(), +1));
  SpectralSummary s = perron_oracle(t, 2.0, 1.0, 0.15);
  EXPECT_NEAR(s.perron_vector(0), kE2 / (kE1 + kE2), 1e-14);
  EXPECT_NEAR(s.perron_vector(1), kE1 / (kE1 + kE2), 1e-14);
  EXPECT_NEAR(s.equilibrium_xi.sum(), 2.0, 1e-13);
  // second eigenvalue of a 2x2 column-stochastic matrix is its trace minus one
  EXPECT_NEAR(s.lambda2_abs, 1.0 - kE1 - kE2, 1e-12);
}

TEST(PerronOracle, ExactDisplacementClosedForm) {
  std::vector<Vec2> p = {{0, 0}, {0.7, 0}, {1.9, 0}, {2.6, 0}, {3.1, 0}};
  auto sc = SwarmScenario::from_positions(p, {AttenuationLaw::InverseSquare, 1.5, 1.0});
  VpeParams params;
  params.variant = TransferVariant::ExactDisplacement;
  TransitionMatrix t = build_transition_matrix(transition_probabilities(sc, params, +1));
  SpectralSummary s = perron_oracle(t, 5.0, 1.0, params.k);
  Eigen::VectorXd want(5);
  for (int i = 0; i < 5; ++i) want(i) = std::exp(-2 * params.k * p[i].x);
  want /= want.sum();
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(s.perron_vector(i), want(i), 1e-9);
}

TEST(PerronOracle, AgreesWithPowerIteration) {
  std::vector<SwarmScenario> cases;
  cases.push_back(SwarmScenario::from_positions(
      generate_positions(ScenarioKind::Line, 100, 1.0, 0),
      {AttenuationLaw::UnitWithinRange, 1.5, 1.0}));
  for (auto kind : {ScenarioKind::Square, ScenarioKind::RotatedSquare, ScenarioKind::Annulus})
    cases.push_back(generate_scenario(kind, 8, 1.0, 3));
  OracleOptions o;
  o.compute_lambda2 = false;
  for (const auto& sc : cases) {
    for (int sign : {+1, -1}) {
      TransitionMatrix t =
          build_transition_matrix(transition_probabilities(sc, unit_params(), sign), sign);
      SpectralSummary s = perron_oracle(t, static_cast<double>(sc.size()), sc.r0(), 0.15, o);
      Eigen::VectorXd v = perron_power_iteration(t, 1e-15, 20'000'000);
      EXPECT_GT(s.perron_vector.minCoeff(), 0.0);
      EXPECT_NEAR(s.perron_vector.sum(), 1.0, 1e-12);
      EXPECT_LE(s.residual, 1e-10);
      // compare in chi, where the localization error is measured
      const double scale = sc.r0() / (2 * 0.15);
      const double dchi =
          (s.perron_vector.array().log() - v.array().log()).abs().maxCoeff() * scale;
      // power iteration stalls on the tiny entries of long chains
      EXPECT_LT(dchi, 1e-4) << sc.size() << " robots";
    }
  }
}

TEST(PerronOracle, LongChainMatchesDetailedBalance) {
  auto sc = SwarmScenario::from_positions(generate_positions(ScenarioKind::Line, 100, 1.0, 0),
                                          {AttenuationLaw::UnitWithinRange, 1.5, 1.0});
  TransitionMatrix t = build_transition_matrix(transition_probabilities(sc, unit_params(), +1));
  OracleOptions o;
  o.compute_lambda2 = false;
  SpectralSummary s = perron_oracle(t, 100.0, 1.0, 0.15, o);
  Eigen::VectorXd w(100);
  w(0) = 1.0;
  for (int i = 1; i < 100; ++i) w(i) = w(i - 1) * t.t.coeff(i, i - 1) / t.t.coeff(i - 1, i);
  w /= w.sum();
  EXPECT_LT((s.perron_vector.array().log() - w.array().log()).abs().maxCoeff(), 1e-10);
}

TEST(PerronOracle, SingleRobot) {
  SparseMatrix p(1, 1);
  SpectralSummary s = perron_oracle(build_transition_matrix(p), 1.0, 1.0, 0.15);
  EXPECT_EQ(s.perron_vector(0), 1.0);
  EXPECT_EQ(s.lambda2_abs, 0.0);
}

TEST(ChainEigensystem, FourRobotsMatchDenseSolver) {
  ChainSpec c{4, kE1, kE2};
  auto pairs = chain_eigensystem(c);
  ASSERT_EQ(pairs.size(), 4u);
  Eigen::EigenSolver<Eigen::MatrixXd> es(chain_transition_matrix(c).dense());
  std::vector<double> dense;
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(es.eigenvalues()(i).imag(), 0.0, 1e-12);
    dense.push_back(es.eigenvalues()(i).real());
  }
  std::sort(dense.rbegin(), dense.rend());
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(pairs[i].lambda, dense[i], 1e-8);
  EXPECT_NEAR(pairs[0].lambda, 1.0, 1e-14);
}

TEST(ChainEigensystem, ResidualsAcrossLengths) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.3);
  for (int trial = 0; trial < 5; ++trial) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (a == b) b += 0.01;
    for (int l = 2; l <= 64; ++l) {
      ChainSpec c{l, a, b};
      Eigen::MatrixXd t = chain_transition_matrix(c).dense();
      for (const auto& p : chain_eigensystem(c)) {
        const double r = (t * p.vector - p.lambda * p.vector).norm();
        ASSERT_LE(r, 1e-8 * p.vector.norm()) << "l " << l << " lambda " << p.lambda;
      }
    }
  }
}

TEST(ChainEigensystem, Lambda2Bound) {
  for (int l : {3, 8, 40}) {
    ChainSpec c{l, kE1, kE2};
    auto pairs = chain_eigensystem(c);
    EXPECT_LE(pairs[1].lambda, 1 - kE1 - kE2 + 2 * std::sqrt(kE1 * kE2) + 1e-15);
    EXPECT_NEAR(chain_lambda2_bound(c), 1 - kE1 - kE2 + 2 * std::sqrt(kE1 * kE2), 1e-15);
  }
}

TEST(ChainEigensystem, SymmetricLimit) {
  ChainSpec c{6, 0.05, 0.05};
  auto pairs = chain_eigensystem(c);
  const Eigen::VectorXd& v = pairs[0].vector;
  for (Eigen::Index i = 1; i < v.size(); ++i) EXPECT_NEAR(v(i), v(0), 1e-12);
}

TEST(ChainPhase, SolvesImplicitEquation) {
  const double g = kE2 / kE1;
  for (double theta : {0.1, 0.5, 1.0, 2.0, 3.0}) {
    const double phi = chain_phase(g, theta);
    EXPECT_NEAR(std::cos(phi), std::sqrt(g) * std::cos(theta + phi), 1e-10);
  }
}

TEST(PredictNmax, Properties) {
  double gap = 1.0;
  for (int l : {100, 1000, 100000}) {
    auto ratio = predict_nmax(ChainSpec::from_speed(2 * l, 0.05, 0.15), 0.1) /
                 predict_nmax(ChainSpec::from_speed(l, 0.05, 0.15), 0.1);
    EXPECT_LT(std::abs(ratio - 2.0), gap) << l;
    gap = std::abs(ratio - 2.0);
  }
  EXPECT_LT(gap, 1e-3);
  ChainSpec c = ChainSpec::from_speed(50, 0.05, 0.15);
  EXPECT_TRUE(std::isfinite(predict_nmax(c, 0.1)));
  // grows like -ln(delta0) as delta0 -> 0
  double prev = predict_nmax(c, 0.5);
  for (double d : {1e-1, 1e-3, 1e-9, 1e-14}) {
    const double n = predict_nmax(c, d);
    EXPECT_GT(n, prev) << d;
    prev = n;
  }
  for (double bad : {0.0, -0.1, 0.51}) {
    try {
      predict_nmax(c, bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidAccuracy);
    }
  }
  EXPECT_NO_THROW(predict_nmax(c, 0.5));
}

TEST(PredictNmax, FiftyRobotChainWithinBound) {
  ChainSpec c{50, kE1, kE2};
  ChainRun r = run_chain(c, 0.1);
  ASSERT_GE(r.n_empirical, 0);
  EXPECT_LE(r.n_empirical, predict_nmax(c, 0.1));
  EXPECT_GE(r.n_empirical, 50 / 2 - 1);
}

TEST(ChainRun, HalvesIdentical) {
  for (int l : {4, 10, 32}) {
    ChainRun r = run_chain(ChainSpec{l, kE1, kE2}, 0.1);
    EXPECT_TRUE(r.halves_identical) << l;
  }
}

TEST(ChainBound, UnsimplifiedBoundIsFinite) {
  ChainSpec c{16, kE1, kE2};
  const double b = detail::chain_unsimplified_bound(c, Eigen::VectorXd::Ones(16), 0.1);
  EXPECT_TRUE(std::isfinite(b));
  EXPECT_GT(b, 0.0);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(3);
  EXPECT_NEAR(detail::s_norm(v, 1.0), std::sqrt(3.0), 1e-14);
}

TEST(AccuracyTrace, ZeroAtEquilibrium) {
  ChainSpec c{6, kE1, kE2};
  SpectralSummary s = perron_oracle(chain_transition_matrix(c), 6.0, 1.0, c.anisotropy());
  auto d = accuracy_trace({s.equilibrium_xi}, s.equilibrium_chi, 1.0, c.anisotropy());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d[0], 0.0, 1e-12);
}

TEST(AccuracyTrace, FirstStepOfPairByHand) {
  const double k = 0.15;
  TransitionMatrix t = build_transition_matrix(transition_probabilities(pair(), unit_params(), +1));
  SpectralSummary s = perron_oracle(t, 2.0, 1.0, k);
  Eigen::VectorXd x1(2);
  x1 << 1 + kE2 - kE1, 1 - kE2 + kE1;
  const double inf0 = 2 * kE2 / (kE1 + kE2), inf1 = 2 * kE1 / (kE1 + kE2);
  const double want = std::max(std::abs(std::log(x1(0) / inf0)), std::abs(std::log(x1(1) / inf1))) /
                      (2 * k);
  auto d = accuracy_trace({x1}, s.equilibrium_chi, 1.0, k);
  EXPECT_NEAR(d[0], want, 1e-12);
}

TEST(AccuracyTrace, EnvelopeFollowsLambda2) {
  ChainSpec c{8, kE1, kE2};
  TransitionMatrix t = chain_transition_matrix(c);
  SpectralSummary s = perron_oracle(t, 8.0, 1.0, c.anisotropy());
  std::vector<Eigen::VectorXd> trace;
  Eigen::VectorXd xi = Eigen::VectorXd::Ones(8);
  for (int n = 0; n <= 1100; ++n) {
    if (n == 1000 || n == 1100) trace.push_back(xi);
    xi = t.t * xi;
  }
  auto d = accuracy_trace(trace, s.equilibrium_chi, 1.0, c.anisotropy());
  EXPECT_LE(d[1] / d[0], std::pow(s.lambda2_abs, 100) * (1 + 1e-3));
}

TEST(ChainSpec, Validate) {
  EXPECT_THROW((ChainSpec{1, 0.01, 0.02}.validate()), Error);
  EXPECT_THROW((ChainSpec{4, 0.6, 0.5}.validate()), Error);
  EXPECT_NEAR(ChainSpec::from_speed(4, 0.05, 0.15).anisotropy(), 0.15, 1e-14);
}
