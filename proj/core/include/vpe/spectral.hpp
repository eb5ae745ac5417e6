#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

namespace vpe {

/// Column-stochastic exchange matrix: T(i,i) = 1 - sum_j P(i,j), T(j,i) = P(i,j).
struct TransitionMatrix {
  SparseMatrix t;
  int axis_sign = 1;

  Eigen::Index size() const noexcept { return t.rows(); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(t); }
};

/// Throws NotIrreducible if the pattern of P is not strongly connected.
TransitionMatrix build_transition_matrix(const SparseMatrix& p, int axis_sign = 1);

bool is_strongly_connected(const SparseMatrix& pattern);

struct SpectralSummary {
  Eigen::VectorXd perron_vector;  // positive, sums to 1
  double lambda2_abs = 0.0;       // 0 when not requested or l == 1
  Eigen::VectorXd equilibrium_xi;
  Eigen::VectorXd equilibrium_chi;  // one-sided estimate of the equilibrium
  double residual = 0.0;            // max |T v - v|
};

struct OracleOptions {
  bool compute_lambda2 = true;
  Eigen::Index dense_limit = 200;   // dense eigensolver up to this size
  long power_budget = 2'000'000;    // deflated power iterations beyond it
  double power_tolerance = 1e-10;
};

/// Equilibrium of xi <- T xi for a given VP total, via a direct sparse solve
/// of (T - I) v = 0 with sum(v) = 1. One-sided chi uses length scale r0 and
/// anisotropy k.
SpectralSummary perron_oracle(const TransitionMatrix& t, double total_vp, double r0, double k,
                              const OracleOptions& options = {});

/// Plain power iteration for the Perron vector; an independent check on the
/// direct solve. Throws NoConvergence past `max_iterations`.
Eigen::VectorXd perron_power_iteration(const TransitionMatrix& t, double tolerance = 1e-13,
                                       long max_iterations = 5'000'000);

/// Second-largest eigenvalue modulus of T.
double second_eigenvalue_modulus(const TransitionMatrix& t, const Eigen::VectorXd& perron,
                                 const OracleOptions& options = {});

/// Dual-direction equilibrium coordinates of a swarm along `axis`.
Eigen::VectorXd equilibrium_positions(const SwarmScenario& scenario, const VpeParams& params,
                                      Vec2 axis);
Eigen::VectorXd equilibrium_positions(const SwarmScenario& scenario, const VpeParams& params);

// ---- 1D chain -------------------------------------------------------------

struct ChainSpec {
  int l = 2;
  double epsilon1 = 0.0;  // toward +x
  double epsilon2 = 0.0;  // toward -x

  double gamma_ratio() const noexcept { return epsilon2 / epsilon1; }
  /// k recovered from the ratio, gamma = exp(2k).
  double anisotropy() const noexcept;
  void validate() const;

  static ChainSpec from_speed(int l, double k1, double k);
};

/// Tridiagonal exchange matrix of an evenly spaced chain with nearest
/// neighbour links only.
TransitionMatrix chain_transition_matrix(const ChainSpec& chain);

struct EigenPair {
  double lambda = 0.0;
  Eigen::VectorXd vector;
  double phi = 0.0;
};

/// Closed-form eigenpairs, p = 1..l, sorted by decreasing eigenvalue.
std::vector<EigenPair> chain_eigensystem(const ChainSpec& chain);

/// Phase solving cos(phi) = sqrt(gamma) cos(theta + phi).
double chain_phase(double gamma, double theta);

/// Printed iteration bound for reaching accuracy delta0. Throws
/// InvalidAccuracy unless 0 < delta0 <= 1/2.
double predict_nmax(const ChainSpec& chain, double delta0);

/// Upper bound on lambda_2 for the chain.
double chain_lambda2_bound(const ChainSpec& chain);

/// max_i |chi_i(n) - chi_inf_i| for each recorded xi, using the one-sided
/// estimate -r0 ln(xi) / (2k).
std::vector<double> accuracy_trace(const std::vector<Eigen::VectorXd>& xi_trace,
                                   const Eigen::VectorXd& equilibrium_chi, double r0, double k);

struct ChainRun {
  long n_empirical = -1;  // first n with delta(n) <= delta0
  std::vector<double> delta;
  bool halves_identical = true;  // middle pair equal while n <= l/2 - 1
};

/// Iterates the chain from xi = 1 (unit spacing) until delta <= delta0.
ChainRun run_chain(const ChainSpec& chain, double delta0, long max_iterations = 1'000'000,
                   bool keep_trace = false);

}  // namespace vpe
