#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

#include "vpe/geometry.hpp"

namespace vpe {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct RobotPose {
  int id = 0;
  Vec2 position;
};

enum class AttenuationLaw { UnitWithinRange, InverseSquare, InverseLinear };

std::string_view to_string(AttenuationLaw law) noexcept;
AttenuationLaw parse_attenuation_law(std::string_view text);

/// Light intensity sensed at distance d from a unit isotropic emitter.
/// Power laws are clamped to 1 inside `reference_distance`; every law is
/// cut off to exactly zero beyond `max_range`.
struct ChannelModel {
  AttenuationLaw law = AttenuationLaw::InverseSquare;
  double max_range = 2.5;
  double reference_distance = 1.0;

  double attenuation(double d) const noexcept;
  void validate() const;
};

/// Symmetric, zero-diagonal attenuation matrix over all robot pairs.
/// Throws CoincidentRobots if two robots share a position and
/// DisconnectedSwarm if the nonzero pattern is not a connected graph.
SparseMatrix build_gamma(std::span<const RobotPose> poses, const ChannelModel& channel);

/// Connectivity of the undirected graph given by the nonzero pattern.
bool is_connected(const SparseMatrix& adjacency);

/// Immutable robot geometry plus the derived attenuation matrix.
class SwarmScenario {
 public:
  SwarmScenario(std::vector<RobotPose> poses, ChannelModel channel,
                std::optional<double> r0_override = std::nullopt,
                Vec2 x_axis = {1.0, 0.0});

  static SwarmScenario from_positions(std::span<const Vec2> positions, ChannelModel channel,
                                      std::optional<double> r0_override = std::nullopt);

  std::size_t size() const noexcept { return poses_.size(); }
  std::span<const RobotPose> poses() const noexcept { return poses_; }
  Vec2 position(int i) const { return poses_[static_cast<std::size_t>(i)].position; }
  std::vector<Vec2> positions() const;

  const ChannelModel& channel() const noexcept { return channel_; }
  const SparseMatrix& gamma() const noexcept { return gamma_; }

  /// Common compass direction; the y axis is its counter-clockwise normal.
  Vec2 x_axis() const noexcept { return x_axis_; }
  Vec2 y_axis() const noexcept { return perpendicular(x_axis_); }

  /// Length scale used by the unit-direction transfer rule: the override if
  /// one was given, otherwise the gamma-weighted mean neighbour distance.
  double r0() const noexcept { return r0_; }
  double weighted_mean_distance() const noexcept { return weighted_mean_distance_; }
  bool r0_overridden() const noexcept { return r0_overridden_; }

  SwarmScenario with_positions(std::span<const Vec2> positions) const;
  SwarmScenario with_r0(double r0) const;

 private:
  std::vector<RobotPose> poses_;
  ChannelModel channel_;
  SparseMatrix gamma_;
  Vec2 x_axis_;
  double weighted_mean_distance_ = 1.0;
  double r0_ = 1.0;
  bool r0_overridden_ = false;
};

enum class ScenarioKind { Line, Square, RotatedSquare, Annulus, Custom };

std::string_view to_string(ScenarioKind kind) noexcept;
ScenarioKind parse_scenario_kind(std::string_view text);

/// Robot positions for one of the standard layouts.
///
/// Line: ceil(size_factor) robots at x = 0, spacing, 2*spacing, ...
/// 2D kinds: ceil(size_factor^2) robots thrown uniformly at random into the
/// region (area = robots * spacing^2) and kept only if no earlier robot lies
/// within 0.8 * spacing. Throws PlacementFailure when the dart budget runs out.
std::vector<Vec2> generate_positions(ScenarioKind kind, double size_factor, double spacing,
                                     std::uint64_t seed);

SwarmScenario generate_scenario(ScenarioKind kind, double size_factor, double spacing,
                                std::uint64_t seed, const ChannelModel& channel = {},
                                std::optional<double> r0_override = std::nullopt);

/// Inner radius of the annulus layout (outer radius is twice this).
double annulus_inner_radius(std::size_t robots, double spacing);

}  // namespace vpe
