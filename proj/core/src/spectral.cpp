#include "vpe/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "chain_bound.hpp"
#include "vpe/error.hpp"

namespace vpe {

namespace {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

bool reaches_all(const SparseMatrix& m) {
  const auto l = m.rows();
  std::vector<char> seen(static_cast<std::size_t>(l), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  Eigen::Index count = 1;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.value() == 0.0 || seen[static_cast<std::size_t>(it.col())]) continue;
      seen[static_cast<std::size_t>(it.col())] = 1;
      ++count;
      stack.push_back(it.col());
    }
  }
  return count == l;
}

double max_residual(const TransitionMatrix& t, const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return (t.t * v - v).cwiseAbs().maxCoeff();
}

}  // namespace

bool is_strongly_connected(const SparseMatrix& pattern) {
  if (pattern.rows() <= 1) return true;
  const SparseMatrix reversed = pattern.transpose();
  return reaches_all(pattern) && reaches_all(reversed);
}

TransitionMatrix build_transition_matrix(const SparseMatrix& p, int axis_sign) {
  if (p.rows() != p.cols()) throw Error(ErrorCode::InvalidArgument, "P must be square");
  if (!is_strongly_connected(p))
    throw Error(ErrorCode::NotIrreducible, "transfer pattern is not strongly connected");
  const auto l = p.rows();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(p.nonZeros() + l));
  for (Eigen::Index i = 0; i < p.outerSize(); ++i) {
    double out = 0.0;
    for (SparseMatrix::InnerIterator it(p, i); it; ++it) {
      if (it.col() == i) continue;
      out += it.value();
      entries.emplace_back(it.col(), i, it.value());
    }
    if (out >= 1.0) throw ExcessiveTransferError(static_cast<int>(i), out);
    entries.emplace_back(i, i, 1.0 - out);
  }
  TransitionMatrix t;
  t.t.resize(l, l);
  t.t.setFromTriplets(entries.begin(), entries.end());
  t.t.makeCompressed();
  t.axis_sign = axis_sign;
  return t;
}

Eigen::VectorXd perron_power_iteration(const TransitionMatrix& t, double tolerance,
                                       long max_iterations) {
  const auto l = t.size();
  Eigen::VectorXd v = Eigen::VectorXd::Constant(l, 1.0 / static_cast<double>(l));
  Eigen::VectorXd next(l);
  for (long n = 0; n < max_iterations; ++n) {
    next = t.t * v;
    next /= next.sum();
    const double change = (next - v).cwiseAbs().maxCoeff();
    v.swap(next);
    if (change < tolerance * v.cwiseAbs().maxCoeff()) return v;
  }
  throw Error(ErrorCode::NoConvergence,
              fmt::format("power iteration did not settle within {} steps", max_iterations));
}

double second_eigenvalue_modulus(const TransitionMatrix& t, const Eigen::VectorXd& perron,
                                 const OracleOptions& options) {
  const auto l = t.size();
  if (l <= 1) return 0.0;
  if (l <= options.dense_limit) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(t.dense(), false);
    if (es.info() != Eigen::Success)
      throw Error(ErrorCode::NoConvergence, "dense eigensolver failed");
    std::vector<double> mod;
    mod.reserve(static_cast<std::size_t>(l));
    for (Eigen::Index i = 0; i < l; ++i) mod.push_back(std::abs(es.eigenvalues()[i]));
    std::sort(mod.begin(), mod.end(), std::greater<>());
    return mod[1];
  }

  // deflate the Perron pair (left vector is all ones) and track the growth rate
  Eigen::VectorXd x(l);
  for (Eigen::Index i = 0; i < l; ++i) x[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  x -= perron * x.sum();
  x.normalize();
  constexpr long block = 50;
  double prev = -1.0;
  for (long n = 0; n < options.power_budget; n += block) {
    for (long m = 0; m < block; ++m) {
      x = t.t * x;
      x -= perron * x.sum();
    }
    const double growth = x.norm();
    if (!(growth > 0.0)) return 0.0;
    const double rate = std::pow(growth, 1.0 / block);
    x /= growth;
    if (prev >= 0.0 && std::abs(rate - prev) < options.power_tolerance) return rate;
    prev = rate;
  }
  throw Error(ErrorCode::NoConvergence,
              fmt::format("deflated power iteration for lambda2 exceeded {} steps",
                          options.power_budget));
}

namespace {

// (D^-1 T D - I) w = 0 with one equation swapped for sum(w) = l.
// The diagonal is the exact outflow, not T(i,i) - 1, which cancels.
Eigen::VectorXd solve_scaled(const SparseMatrix& t, const Eigen::VectorXd& d,
                             const Eigen::VectorXd& outflow, Eigen::Index dropped) {
  const auto l = t.rows();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(t.nonZeros() + 2 * l));
  for (Eigen::Index i = 0; i < l; ++i) {
    if (i == dropped) continue;
    for (SparseMatrix::InnerIterator it(t, i); it; ++it)
      if (it.col() != i) entries.emplace_back(i, it.col(), it.value() * (d[it.col()] / d[i]));
    entries.emplace_back(i, i, -outflow[i]);
  }
  for (Eigen::Index j = 0; j < l; ++j) entries.emplace_back(dropped, j, 1.0);
  ColMatrix a(l, l);
  a.setFromTriplets(entries.begin(), entries.end());
  a.makeCompressed();
  Eigen::SparseLU<ColMatrix> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::NoConvergence, "sparse LU factorization of T - I failed");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(l);
  rhs[dropped] = static_cast<double>(l);
  Eigen::VectorXd w = lu.solve(rhs);
  for (int refine = 0; refine < 3; ++refine) {
    const Eigen::VectorXd r = rhs - a * w;
    if (r.cwiseAbs().maxCoeff() < 1e-15 * static_cast<double>(l)) break;
    w += lu.solve(r);
  }
  return w;
}

}  // namespace

SpectralSummary perron_oracle(const TransitionMatrix& t, double total_vp, double r0, double k,
                              const OracleOptions& options) {
  const auto l = t.size();
  if (l == 0) throw Error(ErrorCode::InvalidArgument, "empty transition matrix");
  if (!(total_vp > 0.0)) throw Error(ErrorCode::InvalidArgument, "total VP must be > 0");
  SpectralSummary s;
  if (l == 1) {
    s.perron_vector = Eigen::VectorXd::Ones(1);
  } else {
    // Entries can span many decades, which an absolute-accuracy solve
    // loses. Solve for w = D^-1 v and rescale D by the last answer until
    // every unknown is of order one.
    Eigen::VectorXd outflow = Eigen::VectorXd::Zero(l);
    for (Eigen::Index i = 0; i < l; ++i)
      for (SparseMatrix::InnerIterator it(t.t, i); it; ++it)
        if (it.col() != i) outflow[it.col()] += it.value();
    Eigen::VectorXd d = Eigen::VectorXd::Ones(l);
    Eigen::VectorXd v;
    Eigen::Index dropped = l - 1;
    bool settled = false;
    for (int pass = 0; pass < 24 && !settled; ++pass) {
      const Eigen::VectorXd w = solve_scaled(t.t, d, outflow, dropped);
      if (!w.allFinite()) break;
      settled = w.minCoeff() > 0.0 && w.maxCoeff() < 8.0 * w.minCoeff();
      v = d.cwiseProduct(w);
      // the balance equation of the heaviest robot is the redundant one
      const double top = v.cwiseAbs().maxCoeff(&dropped);
      for (Eigen::Index i = 0; i < l; ++i)
        d[i] = std::max(std::abs(v[i]), top * std::numeric_limits<double>::min());
      d /= top;
    }
    if (!settled || v.minCoeff() <= 0.0)
      throw Error(ErrorCode::NoConvergence, "Perron vector has nonpositive entries");
    s.perron_vector = v / v.sum();
  }
  s.residual = max_residual(t, s.perron_vector);
  if (s.residual > 1e-10)
    throw Error(ErrorCode::NoConvergence,
                fmt::format("Perron residual {:.3g} exceeds 1e-10", s.residual));
  s.equilibrium_xi = s.perron_vector * total_vp;
  if (k > 0.0) s.equilibrium_chi = extract_single(s.equilibrium_xi, r0, k);
  if (options.compute_lambda2) s.lambda2_abs = second_eigenvalue_modulus(t, s.perron_vector, options);
  return s;
}

Eigen::VectorXd equilibrium_positions(const SwarmScenario& scenario, const VpeParams& params,
                                      Vec2 axis) {
  OracleOptions opt;
  opt.compute_lambda2 = false;
  const double r0 = extraction_scale(scenario, params);
  const auto tp = build_transition_matrix(transition_probabilities(scenario, params, +1, axis), +1);
  const auto tm = build_transition_matrix(transition_probabilities(scenario, params, -1, axis), -1);
  const auto l = static_cast<double>(scenario.size());
  const auto sp = perron_oracle(tp, l, r0, params.k, opt);
  const auto sm = perron_oracle(tm, l, r0, params.k, opt);
  VpeState eq{sp.equilibrium_xi, sm.equilibrium_xi, 0};
  return extract_positions(eq, r0, params.k);
}

Eigen::VectorXd equilibrium_positions(const SwarmScenario& scenario, const VpeParams& params) {
  return equilibrium_positions(scenario, params, scenario.x_axis());
}

// ---- chain ------------------------------------------------------------------

double ChainSpec::anisotropy() const noexcept { return 0.5 * std::log(gamma_ratio()); }

void ChainSpec::validate() const {
  if (l < 2) throw Error(ErrorCode::InvalidArgument, fmt::format("chain needs l >= 2, got {}", l));
  if (!(epsilon1 > 0.0 && epsilon1 < 1.0 && epsilon2 > 0.0 && epsilon2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "chain transfer rates must lie in (0, 1)");
  if (!(epsilon1 + epsilon2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "chain rates must satisfy epsilon1 + epsilon2 < 1");
  if (epsilon1 > epsilon2)
    throw Error(ErrorCode::InvalidArgument, "chain expects epsilon1 <= epsilon2");
}

ChainSpec ChainSpec::from_speed(int l, double k1, double k) {
  return {l, k1 * std::exp(-k), k1 * std::exp(k)};
}

TransitionMatrix chain_transition_matrix(const ChainSpec& chain) {
  chain.validate();
  const int l = chain.l;
  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < l; ++i) {
    double out = 0.0;
    if (i + 1 < l) {
      entries.emplace_back(i + 1, i, chain.epsilon1);
      out += chain.epsilon1;
    }
    if (i > 0) {
      entries.emplace_back(i - 1, i, chain.epsilon2);
      out += chain.epsilon2;
    }
    entries.emplace_back(i, i, 1.0 - out);
  }
  TransitionMatrix t;
  t.t.resize(l, l);
  t.t.setFromTriplets(entries.begin(), entries.end());
  t.t.makeCompressed();
  return t;
}

double chain_phase(double gamma, double theta) {
  // cos(phi) (1 - sqrt(g) cos(theta)) = -sqrt(g) sin(theta) sin(phi)
  const double sg = std::sqrt(gamma);
  return std::atan2(sg * std::cos(theta) - 1.0, sg * std::sin(theta));
}

std::vector<EigenPair> chain_eigensystem(const ChainSpec& chain) {
  chain.validate();
  const int l = chain.l;
  const double g = chain.gamma_ratio();
  const double base = 1.0 - chain.epsilon1 - chain.epsilon2;
  const double amp = 2.0 * std::sqrt(chain.epsilon1 * chain.epsilon2);
  std::vector<EigenPair> out;
  out.reserve(static_cast<std::size_t>(l));

  EigenPair first;
  first.lambda = 1.0;
  first.vector.resize(l);
  for (int i = 1; i <= l; ++i) first.vector[i - 1] = std::pow(g, -i);
  out.push_back(std::move(first));

  for (int p = 2; p <= l; ++p) {
    const double theta = (p - 1) * std::numbers::pi / l;
    EigenPair e;
    e.lambda = base + amp * std::cos(theta);
    e.phi = chain_phase(g, theta);
    e.vector.resize(l);
    for (int i = 1; i <= l; ++i) e.vector[i - 1] = std::pow(g, -0.5 * i) * std::cos(i * theta + e.phi);
    out.push_back(std::move(e));
  }
  return out;
}

double chain_lambda2_bound(const ChainSpec& chain) {
  return 1.0 - chain.epsilon1 - chain.epsilon2 + 2.0 * std::sqrt(chain.epsilon1 * chain.epsilon2);
}

double predict_nmax(const ChainSpec& chain, double delta0) {
  if (!(delta0 > 0.0 && delta0 <= 0.5))
    throw Error(ErrorCode::InvalidAccuracy,
                fmt::format("accuracy delta0 must lie in (0, 1/2], got {}", delta0));
  chain.validate();
  const double g = chain.gamma_ratio();
  if (!(g > 1.0)) throw Error(ErrorCode::InvalidArgument, "iteration bound needs epsilon1 < epsilon2");
  const double num = chain.l * std::log(g) - std::log(g - 1.0) - 2.0 * std::log(1.0 - std::pow(g, -delta0));
  return -num / (2.0 * std::log(chain_lambda2_bound(chain)));
}

std::vector<double> accuracy_trace(const std::vector<Eigen::VectorXd>& xi_trace,
                                   const Eigen::VectorXd& equilibrium_chi, double r0, double k) {
  std::vector<double> out;
  out.reserve(xi_trace.size());
  for (const auto& xi : xi_trace) {
    if (xi.size() != equilibrium_chi.size())
      throw Error(ErrorCode::InvalidArgument, "trace entry length differs from equilibrium");
    const Eigen::VectorXd chi = extract_single(xi, r0, k);
    out.push_back(chi.size() ? (chi - equilibrium_chi).cwiseAbs().maxCoeff() : 0.0);
  }
  return out;
}

ChainRun run_chain(const ChainSpec& chain, double delta0, long max_iterations, bool keep_trace) {
  const auto t = chain_transition_matrix(chain);
  const double k = chain.anisotropy();
  const int l = chain.l;
  OracleOptions opt;
  opt.compute_lambda2 = false;
  const auto eq = perron_oracle(t, l, 1.0, k, opt);

  ChainRun run;
  Eigen::VectorXd xi = Eigen::VectorXd::Ones(l);
  Eigen::VectorXd next(l);
  const int mid = l / 2;  // 1-based pair (l/2, l/2 + 1)
  for (long n = 0;; ++n) {
    const double d = (extract_single(xi, 1.0, k) - eq.equilibrium_chi).cwiseAbs().maxCoeff();
    if (keep_trace) run.delta.push_back(d);
    if (l % 2 == 0 && n <= l / 2 - 1 && xi[mid - 1] != xi[mid]) run.halves_identical = false;
    if (d <= delta0) {
      run.n_empirical = n;
      break;
    }
    if (n >= max_iterations)
      throw Error(ErrorCode::MaxIterationsExceeded,
                  fmt::format("chain of {} did not reach accuracy {} in {} steps", l, delta0,
                              max_iterations));
    next = t.t * xi;
    xi.swap(next);
  }
  return run;
}

namespace detail {

double s_norm(const Eigen::VectorXd& v, double gamma) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    acc += v[i] * v[i] * std::pow(gamma, -static_cast<double>(i + 1));
  return std::sqrt(acc);
}

double chain_unsimplified_bound(const ChainSpec& chain, const Eigen::VectorXd& xi0, double delta0) {
  const auto t = chain_transition_matrix(chain);
  const double g = chain.gamma_ratio();
  const int l = chain.l;
  OracleOptions opt;
  opt.compute_lambda2 = false;
  const auto eq = perron_oracle(t, xi0.sum(), 1.0, chain.anisotropy(), opt);
  Eigen::VectorXd diff(l);
  for (int i = 0; i < l; ++i) diff[i] = std::pow(g, i + 1) * (xi0[i] - eq.equilibrium_xi[i]);
  const double psi = g * eq.equilibrium_xi[0];
  const double ratio =
      std::pow(g, 0.5 * l) * s_norm(diff, g) / (psi * (1.0 - std::pow(g, -delta0)));
  return -std::log(ratio) / std::log(chain_lambda2_bound(chain));
}

}  // namespace detail

}  // namespace vpe
