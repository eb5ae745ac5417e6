#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpe/experiment_config.hpp"
#include "vpe/spectral.hpp"

namespace vpe {

/// (floor(range) + 1) / 2, the line rule.
double range_floor_r0(double max_range);

/// Scenario described by the config, with r0 chosen by its rule. The
/// Optimized rule needs the transfer parameters, so it is applied here too.
SwarmScenario build_scenario(const ExperimentConfig& cfg, std::uint64_t seed);

struct Equilibrium {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // empty for x-only runs
  ErrorSample error;
};

/// Dual-direction equilibrium from the spectral oracle.
Equilibrium equilibrium(const SwarmScenario& scenario, const VpeParams& params, AxisSet axes);

struct R0Fit {
  double r0 = 1.0;
  double mean_error = 0.0;
  double max_error = 0.0;
};

/// r0 minimizing the equilibrium mean error, golden-section on [lo, hi].
/// Only valid for the unit-direction rule, where the equilibrium chi is
/// proportional to r0.
R0Fit optimize_r0(const SwarmScenario& scenario, const VpeParams& params, AxisSet axes,
                  double lo, double hi);

/// One localization run for the configured variant and stop rule.
RunReport localize_scenario(const ExperimentConfig& cfg, const SwarmScenario& scenario,
                            std::uint64_t seed, bool trace_sensing = false);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool degenerate = true;  // fewer than two distinct x values
  std::size_t points = 0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct SweepRow {
  double max_range = 0.0;
  double size_factor = 0.0;
  int seed_index = 0;
  std::uint64_t seed = 0;
  std::size_t robots = 0;
  double r0 = 0.0;
  bool converged = false;
  long iterations = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
  double eq_mean_error = 0.0;
  double eq_max_error = 0.0;
  double wall_time_s = 0.0;
};

struct SweepPoint {
  double max_range = 0.0;
  double size_factor = 0.0;
  int runs = 0;
  double iterations_mean = 0.0, iterations_sd = 0.0;
  double mean_error_mean = 0.0, mean_error_sd = 0.0;
  double eq_error_mean = 0.0, eq_error_sd = 0.0;
  double r0_mean = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;      // ordered by range, size factor, seed
  std::vector<SweepPoint> points;  // one per (range, size factor)
  std::vector<std::pair<double, LinearFit>> fits;  // iterations vs size factor per range
};

/// Every (range, size factor, seed) job. With `iterate` false only the
/// equilibrium is computed and `iterations` stays 0.
SweepResult run_sweep(const ExperimentConfig& cfg, bool iterate = true);

struct CalibrationStudyResult {
  double r0 = 1.0;
  std::vector<double> centroid_off, centroid_on;
  std::vector<double> drift_off, drift_on;  // |centroid(n) - centroid(settle)|, 0 before settle
  double max_drift_off = 0.0;
  double max_drift_on = 0.0;
  bool bounded = false;   // calibrated twin stays within drift_bound * r0
  bool diverged = false;  // uncalibrated twin exceeds uncalibrated_floor * r0
};
CalibrationStudyResult run_calibration_study(const ExperimentConfig& cfg);

/// Jittered rectangular grid, `columns` wide, centred on the origin.
std::vector<Vec2> formation_layout(const FormationConfig& f, std::uint64_t seed);
TargetShape formation_target(const FormationConfig& f);

struct FormationOutcome {
  FormationReport report;
  SwarmScenario initial;
  TargetShape shape;
  double final_similarity = 0.0;
  double max_similarity = 0.0;
  double mean_error = 0.0;  // average over evaluated steps
};
FormationOutcome run_formation_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const FormationState&, const FormationStepRecord&)>& on_step = {});

struct ChainCheckRow {
  int l = 0;
  double epsilon1 = 0.0;
  double epsilon2 = 0.0;
  double delta0 = 0.0;
  double n_max_predicted = 0.0;
  long n_empirical = -1;
  double lambda2 = 0.0;
  double lower_bound = 0.0;  // l/2 - 1
  double eigen_residual = 0.0;
  double unsimplified_bound = 0.0;
  bool halves_identical = true;
};
std::vector<ChainCheckRow> run_chain_checks(const OracleCheckConfig& o);

struct OracleCheckRow {
  ScenarioKind kind = ScenarioKind::Line;
  double size_factor = 0.0;
  std::uint64_t seed = 0;
  std::size_t robots = 0;
  long iterations = 0;
  double max_dchi = 0.0;  // max |chi_vpe - chi_oracle| over both axes
  double max_dchi_later = 0.0;  // same, after running on to twice `iterations`
  double wall_time_s = 0.0;
};
/// Runs the matrix exchange to the oracle criterion on every configured
/// kind, size factor and seed, re-measures the result, then keeps going to
/// twice the convergence iteration and measures again.
std::vector<OracleCheckRow> run_oracle_equivalence(const ExperimentConfig& cfg);

/// Runs fn(i) for i in [0, n) on a pool of workers pulling from a shared
/// counter. The first failure by index is rethrown after all workers exit.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct CommandResult {
  int exit_code = 0;
  std::vector<std::string> lines;  // summary printed by the tool
};

CommandResult cmd_localize(const ExperimentConfig& cfg);
CommandResult cmd_sweep(const ExperimentConfig& cfg);
CommandResult cmd_calibration_study(const ExperimentConfig& cfg);
CommandResult cmd_formation(const ExperimentConfig& cfg);
CommandResult cmd_oracle_check(const ExperimentConfig& cfg);

/// The size-factor-100 square run: converges within 9000 iterations.
CommandResult cmd_long(const ExperimentConfig& cfg);

}  // namespace vpe
