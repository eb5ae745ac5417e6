#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpe/optical_channel.hpp"
#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

namespace vpe {

double shoelace_area(std::span<const Vec2> polygon);  // signed, CCW positive
bool is_simple_polygon(std::span<const Vec2> polygon);

struct BoundingBox {
  Vec2 lo, hi;
  double width() const noexcept { return hi.x - lo.x; }
  double height() const noexcept { return hi.y - lo.y; }
};

/// Simple polygon target region.
class TargetShape {
 public:
  explicit TargetShape(std::vector<Vec2> polygon);

  const std::vector<Vec2>& polygon() const noexcept { return polygon_; }
  double area() const noexcept { return area_; }
  BoundingBox bounding_box() const noexcept { return box_; }
  Vec2 centroid() const noexcept;

  /// Even-odd test; points exactly on an edge may land on either side.
  bool contains(Vec2 p) const noexcept;

  struct Nearest {
    Vec2 point;
    std::size_t edge = 0;
    double distance = 0.0;
  };
  /// Closest boundary point; ties go to the lowest edge index.
  Nearest nearest_boundary_point(Vec2 p) const noexcept;

  TargetShape translated(Vec2 offset) const;
  TargetShape scaled_to_area(double area) const;  // about the centroid

  /// Equilateral triangle with one vertex up, centroid at `center`.
  static TargetShape triangle(double area, Vec2 center = {});
  /// Blocky letter K, a stand-in outline (no reference vertices exist).
  static TargetShape letter_k(double area, Vec2 center = {});
  static TargetShape square(double side, Vec2 center = {});

 private:
  std::vector<Vec2> polygon_;
  double area_ = 0.0;
  BoundingBox box_;
};

struct FormationParams {
  double c1 = 0.006;
  double c2 = 0.5;
  double i0 = 9.0;
  double k_prime = 1.0;
  double c3 = 0.01;
  double c4 = 5.0;
  double step_cap = 0.02;
  long initial_loc_iters = 100;
  long reloc_iters = 10;

  void validate() const;
};

/// Intensities a robot senses while everyone else emits exp(k' r.axis) and
/// then the mirrored pattern; `plus` grows with neighbours on the +axis side.
struct SensedPair {
  double plus = 0.0;
  double minus = 0.0;
};
SensedPair sense_repulsion(const SwarmScenario& scenario, int robot, Vec2 axis, double k_prime);

/// Per axis: C1 tanh(C2 (max(I+, I-) - I0)) sign(I- - I+).
Vec2 repulsive_factor(const SwarmScenario& scenario, int robot, const FormationParams& params);

struct AttractiveResult {
  Vec2 d;
  bool on_boundary = false;  // estimate exactly on the outline; d is zero
};

/// Pull toward the outline from outside, push deeper from inside.
AttractiveResult attractive_factor(Vec2 chi, const TargetShape& shape, const FormationParams& params);

/// Gaussian-smoothed density compared with the target indicator; the width
/// is chosen by golden-section search on [0.1, 5] * spacing. Without an
/// explicit spacing, sqrt(area / robots) is used.
double similarity(std::span<const Vec2> poses, const TargetShape& shape,
                  std::optional<double> spacing = std::nullopt);

/// Mismatch integral / (2A) at a fixed width; exposed for testing.
double similarity_cost(std::span<const Vec2> poses, const TargetShape& shape, double sigma);

/// Localization used between movement steps, warm-started from its last run.
class Localizer {
 public:
  enum class Kind { Matrix, Optical };

  static Localizer matrix(VpeParams params);
  static Localizer optical(OpticalParams params, SensorModel sensors);

  /// Positions estimated after `iterations` rounds on both axes.
  std::vector<Vec2> localize(const SwarmScenario& scenario, long iterations);
  void reset();
  Kind kind() const noexcept { return kind_; }
  bool warm() const noexcept { return warm_.has_value(); }

 private:
  Localizer() = default;
  Kind kind_ = Kind::Matrix;
  VpeParams vpe_;
  OpticalParams optical_;
  SensorModel sensors_;
  std::optional<std::pair<VpeState, VpeState>> warm_;
  long calls_ = 0;
};

struct FormationState {
  std::vector<Vec2> poses;
  std::vector<Vec2> chi;
  long step_index = 0;
};

/// One movement step followed by a warm-started refresh of chi. Throws
/// SwarmFragmented if the moved swarm no longer forms a connected graph.
struct FormationStepResult {
  FormationState state;
  SwarmScenario scenario;
  double max_displacement = 0.0;
};
FormationStepResult formation_step(const FormationState& state, const SwarmScenario& scenario,
                                   const TargetShape& shape, const FormationParams& params,
                                   Localizer& localizer);

/// Displacements for every robot without moving anything.
std::vector<Vec2> formation_displacements(const FormationState& state,
                                          const SwarmScenario& scenario, const TargetShape& shape,
                                          const FormationParams& params);

/// Poses translated into the frame of the estimates (mean offset removed).
std::vector<Vec2> poses_in_estimate_frame(std::span<const Vec2> poses, std::span<const Vec2> chi);

struct FormationStepRecord {
  long step = 0;
  double similarity = 0.0;
  double mean_error = 0.0;
};

struct FormationReport {
  std::vector<FormationStepRecord> steps;
  std::vector<FormationState> snapshots;  // every `snapshot_every` steps plus the last good one
  FormationState final_state;
  bool fragmented = false;
  std::string failure;
};

struct FormationRunOptions {
  long steps = 200;
  long evaluate_every = 1;
  long snapshot_every = 0;
  std::optional<double> similarity_spacing;
  std::function<void(const FormationState&, const FormationStepRecord&)> on_step;
};

/// Initial localization followed by `steps` movement steps. Fragmentation
/// ends the run early and is reported rather than thrown.
FormationReport run_formation(const SwarmScenario& initial, const TargetShape& shape,
                              const FormationParams& params, Localizer& localizer,
                              const FormationRunOptions& options);

}  // namespace vpe
