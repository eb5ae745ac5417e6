#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

namespace vpe {

/// Intensity a robot emits toward direction d: base * exp(anisotropy * d.axis).
struct EmissionProfile {
  double base_intensity = 1.0;
  double anisotropy_k = 0.0;
  Vec2 reference_axis{1.0, 0.0};

  double toward(Vec2 direction) const noexcept;
};

enum class NoiseKind { UniformMultiplicative, GaussianMultiplicative, AdditiveFloor };

std::string_view to_string(NoiseKind kind) noexcept;
NoiseKind parse_noise_kind(std::string_view text);

/// Photodetector model. Noise draws come from a counter-based hash of
/// (seed, stream, round, robot), so a reading does not depend on how many
/// other readings were taken before it.
struct SensorModel {
  double noise_fraction = 0.0;
  std::uint64_t rng_seed = 0;
  NoiseKind kind = NoiseKind::UniformMultiplicative;
  double bias = 0.0;              // systematic relative offset on VP-signal readings
  double skip_probability = 0.0;  // chance a robot sits out a round

  bool noiseless() const noexcept { return noise_fraction == 0.0 && bias == 0.0; }
  double perturb(double value, std::uint64_t stream, long round, int robot) const noexcept;
  bool skips(std::uint64_t stream, long round, int robot) const noexcept;
  void validate() const;
};

/// Uniform double in [0, 1) from a hashed counter.
double hashed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t round,
                      std::uint64_t robot) noexcept;

enum class CalibrationMode {
  None,
  Normalize,    // exact rescale to a total of l
  Distributed,  // isotropic auxiliary exchange
};

std::string_view to_string(CalibrationMode mode) noexcept;
CalibrationMode parse_calibration_mode(std::string_view text);

struct OpticalParams {
  double k1 = 0.05;
  double k2 = 0.05;
  double k3 = 0.2;
  double k4 = 0.2;
  double k = 0.15;
  bool recalibrate_c_every_round = false;
  CalibrationMode calibration = CalibrationMode::Normalize;
  int calibrate_every = 20;  // 0 disables
  int calibration_rounds = 200;
  bool dual = true;  // false: one-sided estimate from the + field alone

  void validate() const;
  VpeParams matrix_equivalent() const;
};

struct SenseResult {
  Eigen::VectorXd s;  // VP-carrying signal
  Eigen::VectorXd c;  // reference signal sensed once or per round
};

/// Ambient intensities for one round. `round` and `stream` key the noise.
SenseResult sense_round(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                        const OpticalParams& params, const SensorModel& sensors, int axis_sign,
                        Vec2 axis, long round = 0, std::uint64_t stream = 0);
SenseResult sense_round(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                        const OpticalParams& params, const SensorModel& sensors, int axis_sign);

/// s only, for the emission xi_j * k1 * exp(-k sign r.axis).
Eigen::VectorXd sense_signal(const SwarmScenario& scenario, const Eigen::VectorXd& xi, double k1,
                             double k, int axis_sign, Vec2 axis, const SensorModel& sensors,
                             long round, std::uint64_t stream,
                             const std::vector<char>* skipping = nullptr);
/// c only, for the emission k2 * exp(+k sign r.axis).
Eigen::VectorXd sense_reference(const SwarmScenario& scenario, double k2, double k, int axis_sign,
                                Vec2 axis, const SensorModel& sensors, long round,
                                std::uint64_t stream);

/// (1 - c k1/k2) xi + s; throws OverdrawnRobot when c k1/k2 >= 1.
double optical_update(double xi, double s, double c, double k1, double k2, int robot = -1);

/// Rescales xi so that its total approaches l using only isotropic emission
/// and sensing. Each robot divides its own xi by its auxiliary value.
Eigen::VectorXd calibrate_total(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                                double k3, double k4, int n_m, const SensorModel& sensors,
                                long round = 0, std::uint64_t stream = 0x5ca1ab1eULL);

struct OpticalRunOptions {
  AxisSet axes = AxisSet::X;
  long trace_every = 0;
  bool trace_sensing = false;
  std::optional<VpeState> initial_x;
  std::optional<VpeState> initial_y;
  /// Centroid of chi (one-sided runs also track the VP total) per iteration.
  bool record_centroid = false;
};

struct OpticalRunReport : RunReport {
  std::vector<double> centroid_x;  // per iteration when recorded
};

OpticalRunReport run_optical_localization(const SwarmScenario& scenario,
                                          const OpticalParams& params, const SensorModel& sensors,
                                          const StopCriterion& stop,
                                          const OpticalRunOptions& options = {});

}  // namespace vpe
