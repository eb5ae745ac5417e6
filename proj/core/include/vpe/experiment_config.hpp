#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vpe/optical_channel.hpp"
#include "vpe/shape_formation.hpp"
#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

namespace vpe {

enum class Variant { Matrix, Optical };
std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view text);

/// How r0 is chosen when no explicit value is set.
enum class R0Rule {
  Weighted,    // gamma-weighted mean neighbour distance
  RangeFloor,  // (floor(max_range) + 1) / 2
  Optimized,   // minimizes the equilibrium error against ground truth
};
std::string_view to_string(R0Rule r) noexcept;
R0Rule parse_r0_rule(std::string_view text);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Square;
  double size_factor = 8.0;
  double spacing = 1.0;
  ChannelModel channel;
  std::optional<double> r0;
  R0Rule r0_rule = R0Rule::Weighted;
  std::string file;  // scenario file; overrides the generated layout when set
};

struct StopConfig {
  StopCriterion::Kind kind = StopCriterion::Kind::Oracle;
  double tolerance = 0.1;
  long window = 200;
  double window_fraction = 0.1;
  long max_iterations = 200000;
  long fixed_iterations = 2000;
};

struct SweepConfig {
  std::vector<double> size_factors;
  std::vector<double> max_ranges;
  int seeds = 10;
  bool equilibrium_only = false;  // skip the iteration, report oracle errors only
};

struct CalibrationStudyConfig {
  long iterations = 2000;
  long settle = 200;
  double drift_bound = 0.1;        // calibrated twin, in units of r0
  double uncalibrated_floor = 1.0;  // uncalibrated twin should exceed this, in r0
  CalibrationMode mode = CalibrationMode::Distributed;
};

struct FormationConfig {
  FormationParams params;
  std::string shape = "triangle";  // triangle | k | polygon
  std::vector<Vec2> polygon;
  std::optional<double> target_area;  // default: robots * spacing^2 * sqrt(3)/2
  long steps = 200;
  int robots = 52;
  int columns = 13;
  double spacing = 0.2;
  double jitter = 0.02;
  long evaluate_every = 5;
  long snapshot_every = 50;
  double min_similarity = 0.7;
};

struct OracleCheckConfig {
  std::vector<int> chain_lengths{4, 8, 16, 32, 64, 100};
  double delta0 = 0.1;
  double k1 = 0.05;
  double k = 0.15;
  std::vector<ScenarioKind> kinds{ScenarioKind::Line, ScenarioKind::Square,
                                  ScenarioKind::RotatedSquare, ScenarioKind::Annulus};
  std::vector<double> size_factors{4, 8, 12, 16, 20};
  int seeds = 5;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  Variant variant = Variant::Matrix;
  ScenarioConfig scenario;
  VpeParams vpe;
  OpticalParams optical;
  SensorModel sensor;
  StopConfig stop;
  AxisSet axes = AxisSet::XY;
  long trace_every = 0;
  SweepConfig sweep;
  CalibrationStudyConfig calibration;
  FormationConfig formation;
  OracleCheckConfig oracle;
  int threads = 0;  // 0: hardware concurrency
  std::string out_dir = "out";
  bool long_run = false;

  /// Every field with defaults filled in, keys sorted.
  std::string canonical_json() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// Module-level parameter checks; throws vpe::Error.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace vpe
