#include "vpe/vpe_core.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe {

std::string_view to_string(TransferVariant v) noexcept {
  return v == TransferVariant::ExactDisplacement ? "exact-displacement" : "unit-direction";
}

TransferVariant parse_transfer_variant(std::string_view text) {
  if (text == "exact-displacement" || text == "exact") return TransferVariant::ExactDisplacement;
  if (text == "unit-direction" || text == "unit") return TransferVariant::UnitDirection;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown transfer variant '{}'", text));
}

void VpeParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be > 0, got {}", name, v));
  };
  if (!(k >= 0.0) || !std::isfinite(k))
    throw Error(ErrorCode::InvalidArgument, fmt::format("k must be >= 0, got {}", k));
  positive(k0, "k0");
  positive(k1, "k1");
  if (normalize_every < 0)
    throw Error(ErrorCode::InvalidArgument, "normalize_every must be >= 0");
}

SparseMatrix transition_probabilities(const SwarmScenario& scenario, const VpeParams& params,
                                      int axis_sign, Vec2 axis) {
  params.validate();
  if (axis_sign != 1 && axis_sign != -1)
    throw Error(ErrorCode::InvalidArgument, "axis_sign must be +1 or -1");
  const auto& gamma = scenario.gamma();
  const bool exact = params.variant == TransferVariant::ExactDisplacement;
  const double speed = exact ? params.k0 : params.k1;
  const double ks = params.k * axis_sign;

  SparseMatrix p = gamma;  // same pattern
  int worst = -1;
  double worst_sum = 0.0;
  for (int i = 0; i < p.outerSize(); ++i) {
    double sum = 0.0;
    const Vec2 ri = scenario.position(i);
    for (SparseMatrix::InnerIterator it(p, i); it; ++it) {
      const Vec2 rij = scenario.position(static_cast<int>(it.col())) - ri;
      const double proj = exact ? dot(rij, axis) : dot(normalized(rij), axis);
      it.valueRef() = it.value() * speed * std::exp(-ks * proj);
      sum += it.value();
    }
    if (sum >= 1.0 && sum > worst_sum) {
      worst = i;
      worst_sum = sum;
    }
  }
  if (worst >= 0) throw ExcessiveTransferError(worst, worst_sum);
  return p;
}

SparseMatrix transition_probabilities(const SwarmScenario& scenario, const VpeParams& params,
                                      int axis_sign) {
  return transition_probabilities(scenario, params, axis_sign, scenario.x_axis());
}

TransferOperator::TransferOperator(const SparseMatrix& p)
    : incoming_(p.transpose()), stay_(Eigen::VectorXd::Ones(p.rows())) {
  for (int i = 0; i < p.outerSize(); ++i) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(p, i); it; ++it) sum += it.value();
    stay_[i] = 1.0 - sum;
  }
  incoming_.makeCompressed();
}

void TransferOperator::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
  out.resize(in.size());
  for (Eigen::Index i = 0; i < incoming_.outerSize(); ++i) {
    double acc = stay_[i] * in[i];
    for (SparseMatrix::InnerIterator it(incoming_, i); it; ++it) acc += it.value() * in[it.col()];
    out[i] = acc;
  }
}

Eigen::VectorXd TransferOperator::apply(const Eigen::VectorXd& in) const {
  Eigen::VectorXd out;
  apply(in, out);
  return out;
}

VpeState VpeState::uniform(std::size_t robots) {
  const auto n = static_cast<Eigen::Index>(robots);
  return {Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(n), 0};
}

VpeState vpe_step(const VpeState& state, const TransferOperator& t_plus,
                  const TransferOperator& t_minus) {
  VpeState next;
  t_plus.apply(state.xi_plus, next.xi_plus);
  t_minus.apply(state.xi_minus, next.xi_minus);
  next.iteration = state.iteration + 1;
  return next;
}

Eigen::VectorXd normalize(const Eigen::VectorXd& xi) {
  const double total = xi.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "cannot normalize a nonpositive VP total");
  return xi * (static_cast<double>(xi.size()) / total);
}

Eigen::VectorXd extract_positions(const VpeState& state, double r0, double k) {
  if (!(k > 0.0)) throw Error(ErrorCode::InvalidArgument, "extraction needs k > 0");
  return (state.xi_minus.array().log() - state.xi_plus.array().log()) * (r0 / (4.0 * k));
}

Eigen::VectorXd extract_single(const Eigen::VectorXd& xi, double r0, double k) {
  if (!(k > 0.0)) throw Error(ErrorCode::InvalidArgument, "extraction needs k > 0");
  return xi.array().log() * (-r0 / (2.0 * k));
}

double extraction_scale(const SwarmScenario& scenario, const VpeParams& params) {
  return params.variant == TransferVariant::ExactDisplacement ? 1.0 : scenario.r0();
}

StopCriterion StopCriterion::oracle(Eigen::VectorXd ref_x, std::optional<Eigen::VectorXd> ref_y,
                                    double tolerance, long max_iterations) {
  StopCriterion s;
  s.kind = Kind::Oracle;
  s.reference_x = std::move(ref_x);
  s.reference_y = std::move(ref_y);
  s.tolerance = tolerance;
  s.max_iterations = max_iterations;
  return s;
}

StopCriterion StopCriterion::sliding(long window, double fraction, long max_iterations) {
  StopCriterion s;
  s.kind = Kind::SlidingWindow;
  s.window = window;
  s.window_fraction = fraction;
  s.max_iterations = max_iterations;
  return s;
}

StopCriterion StopCriterion::fixed(long iterations) {
  StopCriterion s;
  s.kind = Kind::FixedIterations;
  s.fixed_iterations = iterations;
  return s;
}

Eigen::VectorXd axis_coordinates(const SwarmScenario& scenario, Vec2 axis) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(scenario.size()));
  for (std::size_t i = 0; i < scenario.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = dot(scenario.poses()[i].position, axis);
  return out;
}

ErrorSample localization_error(const SwarmScenario& scenario, const Eigen::VectorXd& chi_x,
                               const Eigen::VectorXd* chi_y) {
  ErrorSample e;
  const auto n = chi_x.size();
  if (n == 0) return e;
  const Eigen::VectorXd tx = axis_coordinates(scenario, scenario.x_axis());
  const Eigen::VectorXd dx = (chi_x.array() - chi_x.mean()) - (tx.array() - tx.mean());
  Eigen::ArrayXd err = dx.array().abs();
  if (chi_y && chi_y->size() == n) {
    const Eigen::VectorXd ty = axis_coordinates(scenario, scenario.y_axis());
    const Eigen::ArrayXd dy = (chi_y->array() - chi_y->mean()) - (ty.array() - ty.mean());
    err = (dx.array().square() + dy.square()).sqrt();
  }
  e.mean_error = err.mean();
  e.max_error = err.maxCoeff();
  return e;
}

namespace {

double max_abs_diff_aligned(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a.array() - a.mean()) - (b.array() - b.mean())).abs().maxCoeff();
}

}  // namespace

ConvergenceMonitor::ConvergenceMonitor(const StopCriterion& stop, double r0, bool two_axes)
    : stop_(stop), r0_(r0), two_axes_(two_axes) {
  if (stop_.kind == StopCriterion::Kind::Oracle) {
    if (!stop_.reference_x) throw Error(ErrorCode::InvalidArgument, "oracle stop needs a reference");
    if (two_axes_ && !stop_.reference_y)
      throw Error(ErrorCode::InvalidArgument, "oracle stop on two axes needs a y reference");
    if (!(stop_.tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be > 0");
  }
  if (stop_.kind == StopCriterion::Kind::SlidingWindow && stop_.window <= 0)
    throw Error(ErrorCode::InvalidArgument, "sliding window must be positive");
  if (stop_.kind != StopCriterion::Kind::FixedIterations && stop_.max_iterations <= 0)
    throw Error(ErrorCode::InvalidArgument, "max_iterations must be positive");
  if (stop_.kind == StopCriterion::Kind::FixedIterations && stop_.fixed_iterations < 0)
    throw Error(ErrorCode::InvalidArgument, "fixed_iterations must be >= 0");
}

bool ConvergenceMonitor::check(long iteration, const Eigen::VectorXd& chi_x,
                               const Eigen::VectorXd* chi_y) {
  const bool use_y = two_axes_ && chi_y != nullptr;
  switch (stop_.kind) {
    case StopCriterion::Kind::FixedIterations:
      return iteration >= stop_.fixed_iterations;
    case StopCriterion::Kind::Oracle: {
      if (chi_x.size() != stop_.reference_x->size())
        throw Error(ErrorCode::InvalidArgument, "oracle reference has the wrong length");
      double d = chi_x.size() ? (chi_x - *stop_.reference_x).cwiseAbs().maxCoeff() : 0.0;
      if (use_y && chi_y->size())
        d = std::max(d, (*chi_y - *stop_.reference_y).cwiseAbs().maxCoeff());
      return d < stop_.tolerance;
    }
    case StopCriterion::Kind::SlidingWindow: {
      if (chi_x.size() <= 1) return true;
      if (iteration % stop_.window != 0) return false;
      bool settled = false;
      if (snapshot_at_ >= 0) {
        double d = max_abs_diff_aligned(chi_x, snap_x_);
        if (use_y) d = std::max(d, max_abs_diff_aligned(*chi_y, snap_y_));
        settled = d < stop_.window_fraction * r0_;
      }
      snapshot_at_ = iteration;
      snap_x_ = chi_x;
      if (use_y) snap_y_ = *chi_y;
      return settled;
    }
  }
  return false;
}

long ConvergenceMonitor::budget() const {
  return stop_.kind == StopCriterion::Kind::FixedIterations ? stop_.fixed_iterations
                                                            : stop_.max_iterations;
}

bool ConvergenceMonitor::budget_exhausted(long iteration) const { return iteration >= budget(); }

namespace {

struct AxisRun {
  Vec2 axis;
  TransferOperator plus, minus;
  VpeState state;
};

void clamp_beacons(VpeState& s, std::span<const Beacon> beacons, Vec2 axis, double k, double r0) {
  for (const auto& b : beacons) {
    const double x = dot(b.position, axis) / r0;
    s.xi_plus[b.robot] = std::exp(-2.0 * k * x);
    s.xi_minus[b.robot] = std::exp(2.0 * k * x);
  }
}

}  // namespace

RunReport run_localization(const SwarmScenario& scenario, const VpeParams& params,
                           const StopCriterion& stop, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  params.validate();
  if (!(params.k > 0.0)) throw Error(ErrorCode::InvalidArgument, "localization needs k > 0");
  const auto l = scenario.size();
  for (const auto& b : options.beacons)
    if (b.robot < 0 || static_cast<std::size_t>(b.robot) >= l)
      throw Error(ErrorCode::InvalidArgument, fmt::format("beacon robot {} out of range", b.robot));

  const bool two = options.axes == AxisSet::XY;
  const double r0 = extraction_scale(scenario, params);
  ConvergenceMonitor monitor(stop, r0, two);

  std::vector<AxisRun> runs;
  auto add_axis = [&](Vec2 axis, const std::optional<VpeState>& init) {
    AxisRun run{axis,
                TransferOperator(transition_probabilities(scenario, params, +1, axis)),
                TransferOperator(transition_probabilities(scenario, params, -1, axis)),
                init ? *init : VpeState::uniform(l)};
    if (run.state.xi_plus.size() != static_cast<Eigen::Index>(l) ||
        run.state.xi_minus.size() != static_cast<Eigen::Index>(l))
      throw Error(ErrorCode::InvalidArgument, "warm-start state has the wrong length");
    run.state.iteration = 0;
    clamp_beacons(run.state, options.beacons, axis, params.k, r0);
    runs.push_back(std::move(run));
  };
  add_axis(scenario.x_axis(), options.initial_x);
  if (two) add_axis(scenario.y_axis(), options.initial_y);

  const bool may_normalize = params.normalize_every > 0 && options.beacons.empty();

  RunReport report;
  Eigen::VectorXd chi_x, chi_y;
  auto extract = [&] {
    chi_x = extract_positions(runs[0].state, r0, params.k);
    if (two) chi_y = extract_positions(runs[1].state, r0, params.k);
  };
  auto record = [&](long n) {
    const auto e = localization_error(scenario, chi_x, two ? &chi_y : nullptr);
    report.error_trace.push_back({n, e.mean_error, e.max_error});
    report.chi_trace.push_back({n, chi_x, two ? chi_y : Eigen::VectorXd()});
  };

  long n = 0;
  extract();
  if (options.trace_every > 0) record(0);
  bool done = monitor.check(0, chi_x, two ? &chi_y : nullptr);
  while (!done) {
    if (monitor.budget_exhausted(n)) break;
    for (auto& run : runs) {
      run.state = vpe_step(run.state, run.plus, run.minus);
      clamp_beacons(run.state, options.beacons, run.axis, params.k, r0);
      if (may_normalize && run.state.iteration % params.normalize_every == 0) {
        run.state.xi_plus = normalize(run.state.xi_plus);
        run.state.xi_minus = normalize(run.state.xi_minus);
      }
    }
    ++n;
    extract();
    if (options.trace_every > 0 && n % options.trace_every == 0) record(n);
    done = monitor.check(n, chi_x, two ? &chi_y : nullptr);
  }

  if (!done && stop.kind != StopCriterion::Kind::FixedIterations)
    throw Error(ErrorCode::MaxIterationsExceeded,
                fmt::format("no convergence within {} iterations ({} robots)", monitor.budget(), l));

  report.converged = done;
  report.converged_at = done ? n : -1;
  report.iterations = n;
  report.chi_x = chi_x;
  if (two) report.chi_y = chi_y;
  const auto e = localization_error(scenario, chi_x, two ? &chi_y : nullptr);
  report.mean_error = e.mean_error;
  report.max_error = e.max_error;
  if (options.trace_every > 0 && (report.error_trace.empty() || report.error_trace.back().iteration != n))
    record(n);
  report.final_x = runs[0].state;
  if (two) report.final_y = runs[1].state;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace vpe
