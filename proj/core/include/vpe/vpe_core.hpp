#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vpe/swarm_model.hpp"

namespace vpe {

enum class TransferVariant {
  ExactDisplacement,  // exponent uses the full relative displacement
  UnitDirection,      // exponent uses only its direction (sensing-only form)
};

std::string_view to_string(TransferVariant v) noexcept;
TransferVariant parse_transfer_variant(std::string_view text);

struct VpeParams {
  double k = 0.15;
  double k0 = 0.05;  // exact-displacement speed
  double k1 = 0.05;  // unit-direction speed
  TransferVariant variant = TransferVariant::UnitDirection;
  int normalize_every = 20;  // 0 disables

  void validate() const;
};

/// Per-pair transfer fractions P(i, j): the share of robot i's VPs handed to
/// robot j in one round, for the run engaged along `sign * axis`.
/// Throws ExcessiveTransferError if a robot would give away >= 1.
SparseMatrix transition_probabilities(const SwarmScenario& scenario, const VpeParams& params,
                                      int axis_sign, Vec2 axis);
SparseMatrix transition_probabilities(const SwarmScenario& scenario, const VpeParams& params,
                                      int axis_sign);

/// Column-stochastic round map xi -> T xi assembled from P.
class TransferOperator {
 public:
  TransferOperator() = default;
  explicit TransferOperator(const SparseMatrix& p);

  void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& in) const;

  Eigen::Index size() const noexcept { return stay_.size(); }
  const SparseMatrix& incoming() const noexcept { return incoming_; }  // row i holds P(j, i)
  const Eigen::VectorXd& stay() const noexcept { return stay_; }       // 1 - sum_j P(i, j)

 private:
  SparseMatrix incoming_;
  Eigen::VectorXd stay_;
};

struct VpeState {
  Eigen::VectorXd xi_plus;
  Eigen::VectorXd xi_minus;
  long iteration = 0;

  static VpeState uniform(std::size_t robots);
};

VpeState vpe_step(const VpeState& state, const TransferOperator& t_plus,
                  const TransferOperator& t_minus);

Eigen::VectorXd normalize(const Eigen::VectorXd& xi);

/// Dual-direction coordinate estimate r0 * (ln xi- - ln xi+) / (4k).
Eigen::VectorXd extract_positions(const VpeState& state, double r0, double k);
/// One-sided estimate -r0 * ln(xi) / (2k); origin depends on the VP total.
Eigen::VectorXd extract_single(const Eigen::VectorXd& xi, double r0, double k);

/// Length scale fed to the extraction step: the scenario r0 for the
/// unit-direction rule, 1 for exact displacement.
double extraction_scale(const SwarmScenario& scenario, const VpeParams& params);

/// Pin VPs of robots that know their own position.
struct Beacon {
  int robot = 0;
  Vec2 position;
};

enum class AxisSet { X, XY };

struct StopCriterion {
  enum class Kind { Oracle, SlidingWindow, FixedIterations };
  Kind kind = Kind::SlidingWindow;

  double tolerance = 0.1;  // oracle: max |chi - chi_inf|
  std::optional<Eigen::VectorXd> reference_x;
  std::optional<Eigen::VectorXd> reference_y;

  long window = 200;             // sliding window length
  double window_fraction = 0.1;  // allowed change, in units of r0

  long max_iterations = 200000;  // budget for Oracle / SlidingWindow
  long fixed_iterations = 0;     // FixedIterations

  static StopCriterion oracle(Eigen::VectorXd ref_x, std::optional<Eigen::VectorXd> ref_y,
                              double tolerance = 0.1, long max_iterations = 200000);
  static StopCriterion sliding(long window = 200, double fraction = 0.1,
                               long max_iterations = 200000);
  static StopCriterion fixed(long iterations);
};

struct ErrorSample {
  long iteration = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
};

struct ChiSnapshot {
  long iteration = 0;
  Eigen::VectorXd chi_x;
  Eigen::VectorXd chi_y;
};

/// Raw sensed values for one traced round (optical runs only).
struct SenseTraceRow {
  long iteration = 0;
  int robot = 0;
  double s = 0.0;
  double c = 0.0;
  double xi_plus = 0.0;
  double xi_minus = 0.0;
};

struct RunReport {
  bool converged = false;
  long converged_at = -1;
  long iterations = 0;
  Eigen::VectorXd chi_x;
  Eigen::VectorXd chi_y;  // empty for x-only runs
  double mean_error = 0.0;
  double max_error = 0.0;
  std::vector<ErrorSample> error_trace;
  std::vector<ChiSnapshot> chi_trace;
  std::vector<SenseTraceRow> sense_trace;
  double wall_time_s = 0.0;

  VpeState final_x;
  VpeState final_y;
};

struct RunOptions {
  AxisSet axes = AxisSet::X;
  long trace_every = 0;  // 0: record no intermediate traces
  std::vector<Beacon> beacons;
  std::optional<VpeState> initial_x;  // warm start
  std::optional<VpeState> initial_y;
};

/// Runs the matrix-form exchange on one or two axes with both opposed
/// fields advanced in the same rounds. Throws MaxIterationsExceeded when an
/// Oracle or SlidingWindow criterion is not met within its budget.
RunReport run_localization(const SwarmScenario& scenario, const VpeParams& params,
                           const StopCriterion& stop, const RunOptions& options = {});

/// Position error after moving both centroids to the origin. For x-only
/// estimates the error is |dx|, otherwise the Euclidean norm.
ErrorSample localization_error(const SwarmScenario& scenario, const Eigen::VectorXd& chi_x,
                               const Eigen::VectorXd* chi_y);

/// Coordinates of the robots along `axis`.
Eigen::VectorXd axis_coordinates(const SwarmScenario& scenario, Vec2 axis);

/// Decides when a run has settled; shared by the matrix and optical drivers.
class ConvergenceMonitor {
 public:
  ConvergenceMonitor(const StopCriterion& stop, double r0, bool two_axes);

  /// True once the criterion is met at this iteration.
  bool check(long iteration, const Eigen::VectorXd& chi_x, const Eigen::VectorXd* chi_y);
  bool budget_exhausted(long iteration) const;
  long budget() const;

 private:
  StopCriterion stop_;
  double r0_;
  bool two_axes_;
  long snapshot_at_ = -1;
  Eigen::VectorXd snap_x_, snap_y_;
};

}  // namespace vpe
