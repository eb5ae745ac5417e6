#include "vpe/swarm_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <unordered_map>

#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe {

std::string_view to_string(AttenuationLaw law) noexcept {
  switch (law) {
    case AttenuationLaw::UnitWithinRange: return "unit-within-range";
    case AttenuationLaw::InverseSquare: return "inverse-square";
    case AttenuationLaw::InverseLinear: return "inverse-linear";
  }
  return "inverse-square";
}

AttenuationLaw parse_attenuation_law(std::string_view text) {
  if (text == "unit-within-range" || text == "unit") return AttenuationLaw::UnitWithinRange;
  if (text == "inverse-square") return AttenuationLaw::InverseSquare;
  if (text == "inverse-linear") return AttenuationLaw::InverseLinear;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown attenuation law '{}'", text));
}

double ChannelModel::attenuation(double d) const noexcept {
  if (!(d <= max_range)) return 0.0;
  switch (law) {
    case AttenuationLaw::UnitWithinRange:
      return 1.0;
    case AttenuationLaw::InverseSquare: {
      if (d <= reference_distance) return 1.0;
      const double q = reference_distance / d;
      return q * q;
    }
    case AttenuationLaw::InverseLinear:
      return d <= reference_distance ? 1.0 : reference_distance / d;
  }
  return 0.0;
}

void ChannelModel::validate() const {
  if (!(max_range > 0.0) || !std::isfinite(max_range))
    throw Error(ErrorCode::InvalidArgument, fmt::format("max_range must be > 0, got {}", max_range));
  if (!(reference_distance > 0.0) || !std::isfinite(reference_distance))
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("reference_distance must be > 0, got {}", reference_distance));
}

namespace {

// Uniform bucket grid for neighbour queries; cell size >= query radius so
// only the 3x3 block around a point needs scanning.
class CellGrid {
 public:
  explicit CellGrid(double cell) : cell_(cell) {}

  void insert(Vec2 p, int index) { cells_[key(cell_of(p.x), cell_of(p.y))].push_back(index); }

  template <typename F>
  void for_near(Vec2 p, F&& f) const {
    const auto cx = cell_of(p.x);
    const auto cy = cell_of(p.y);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (int j : it->second) f(j);
      }
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::uint64_t key(std::int64_t a, std::int64_t b) {
    return (static_cast<std::uint64_t>(a) << 32) ^ (static_cast<std::uint64_t>(b) & 0xffffffffULL);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

void check_ids(std::span<const RobotPose> poses) {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i].id != static_cast<int>(i))
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("robot ids must be dense 0..l-1; slot {} has id {}", i, poses[i].id));
    if (!std::isfinite(poses[i].position.x) || !std::isfinite(poses[i].position.y))
      throw Error(ErrorCode::InvalidArgument, fmt::format("robot {} has a non-finite position", i));
  }
}

}  // namespace

SparseMatrix build_gamma(std::span<const RobotPose> poses, const ChannelModel& channel) {
  channel.validate();
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "scenario has no robots");
  check_ids(poses);
  const auto l = static_cast<int>(poses.size());

  // exact duplicates first, independent of range
  {
    std::vector<int> order(poses.size());
    for (int i = 0; i < l; ++i) order[static_cast<std::size_t>(i)] = i;
    auto pos = [&](int i) { return poses[static_cast<std::size_t>(i)].position; };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return pos(a).x != pos(b).x ? pos(a).x < pos(b).x : pos(a).y < pos(b).y;
    });
    for (std::size_t n = 1; n < order.size(); ++n)
      if (pos(order[n]) == pos(order[n - 1]))
        throw Error(ErrorCode::CoincidentRobots,
                    fmt::format("robots {} and {} share position ({}, {})", order[n - 1], order[n],
                                pos(order[n]).x, pos(order[n]).y));
  }

  CellGrid grid(channel.max_range);
  for (int i = 0; i < l; ++i) grid.insert(poses[static_cast<std::size_t>(i)].position, i);

  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < l; ++i) {
    const Vec2 pi = poses[static_cast<std::size_t>(i)].position;
    grid.for_near(pi, [&](int j) {
      if (j == i) return;
      const double g = channel.attenuation(distance(pi, poses[static_cast<std::size_t>(j)].position));
      if (g > 0.0) entries.emplace_back(i, j, g);
    });
  }
  SparseMatrix gamma(l, l);
  gamma.setFromTriplets(entries.begin(), entries.end());
  gamma.makeCompressed();

  if (!is_connected(gamma))
    throw Error(ErrorCode::DisconnectedSwarm,
                fmt::format("communication graph of {} robots is disconnected at max_range {}", l,
                            channel.max_range));
  return gamma;
}

bool is_connected(const SparseMatrix& adjacency) {
  const auto l = adjacency.rows();
  if (l <= 1) return true;
  std::vector<char> seen(static_cast<std::size_t>(l), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  Eigen::Index reached = 1;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
      if (it.value() == 0.0) continue;
      const auto j = it.col();
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        ++reached;
        stack.push_back(j);
      }
    }
  }
  return reached == l;
}

SwarmScenario::SwarmScenario(std::vector<RobotPose> poses, ChannelModel channel,
                             std::optional<double> r0_override, Vec2 x_axis)
    : poses_(std::move(poses)), channel_(channel), x_axis_(normalized(x_axis)) {
  if (norm(x_axis) == 0.0) throw Error(ErrorCode::InvalidArgument, "x_axis must be nonzero");
  gamma_ = build_gamma(poses_, channel_);

  double wsum = 0.0, wd = 0.0;
  for (int i = 0; i < gamma_.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(gamma_, i); it; ++it) {
      wsum += it.value();
      wd += it.value() * distance(position(i), position(static_cast<int>(it.col())));
    }
  weighted_mean_distance_ = wsum > 0.0 ? wd / wsum : 1.0;

  if (r0_override) {
    if (!(*r0_override > 0.0) || !std::isfinite(*r0_override))
      throw Error(ErrorCode::InvalidArgument, fmt::format("r0 must be > 0, got {}", *r0_override));
    r0_ = *r0_override;
    r0_overridden_ = true;
  } else {
    r0_ = weighted_mean_distance_;
  }
}

SwarmScenario SwarmScenario::from_positions(std::span<const Vec2> positions, ChannelModel channel,
                                            std::optional<double> r0_override) {
  std::vector<RobotPose> poses;
  poses.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    poses.push_back({static_cast<int>(i), positions[i]});
  return SwarmScenario(std::move(poses), channel, r0_override);
}

std::vector<Vec2> SwarmScenario::positions() const {
  std::vector<Vec2> out;
  out.reserve(poses_.size());
  for (const auto& p : poses_) out.push_back(p.position);
  return out;
}

SwarmScenario SwarmScenario::with_positions(std::span<const Vec2> positions) const {
  std::vector<RobotPose> poses;
  poses.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    poses.push_back({static_cast<int>(i), positions[i]});
  return SwarmScenario(std::move(poses), channel_,
                       r0_overridden_ ? std::optional<double>(r0_) : std::nullopt, x_axis_);
}

SwarmScenario SwarmScenario::with_r0(double r0) const {
  SwarmScenario copy = *this;
  if (!(r0 > 0.0) || !std::isfinite(r0))
    throw Error(ErrorCode::InvalidArgument, fmt::format("r0 must be > 0, got {}", r0));
  copy.r0_ = r0;
  copy.r0_overridden_ = true;
  return copy;
}

std::string_view to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::Line: return "line";
    case ScenarioKind::Square: return "square";
    case ScenarioKind::RotatedSquare: return "rotated_square";
    case ScenarioKind::Annulus: return "annulus";
    case ScenarioKind::Custom: return "custom";
  }
  return "custom";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "line") return ScenarioKind::Line;
  if (text == "square") return ScenarioKind::Square;
  if (text == "rotated_square" || text == "rotated-square") return ScenarioKind::RotatedSquare;
  if (text == "annulus") return ScenarioKind::Annulus;
  if (text == "custom") return ScenarioKind::Custom;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown scenario kind '{}'", text));
}

double annulus_inner_radius(std::size_t robots, double spacing) {
  return spacing * std::sqrt(static_cast<double>(robots) / (3.0 * std::numbers::pi));
}

std::vector<Vec2> generate_positions(ScenarioKind kind, double size_factor, double spacing,
                                     std::uint64_t seed) {
  if (!(size_factor >= 2.0) || !std::isfinite(size_factor))
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("size_factor must be >= 2, got {}", size_factor));
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw Error(ErrorCode::InvalidArgument, fmt::format("spacing must be > 0, got {}", spacing));

  if (kind == ScenarioKind::Line) {
    const auto n = static_cast<std::size_t>(std::ceil(size_factor));
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {static_cast<double>(i) * spacing, 0.0};
    return out;
  }
  if (kind == ScenarioKind::Custom)
    throw Error(ErrorCode::InvalidArgument, "custom scenarios carry explicit positions");

  const auto n = static_cast<std::size_t>(std::ceil(size_factor * size_factor));
  const double area = static_cast<double>(n) * spacing * spacing;

  // region as (bounding half-width, membership test)
  double half = 0.0;
  std::function<bool(Vec2)> inside;
  switch (kind) {
    case ScenarioKind::Square: {
      half = 0.5 * std::sqrt(area);
      inside = [](Vec2) { return true; };
      break;
    }
    case ScenarioKind::RotatedSquare: {
      const double h = 0.5 * std::sqrt(area);
      half = h * std::numbers::sqrt2;
      inside = [h](Vec2 p) {
        const double c = std::numbers::sqrt2 / 2.0;
        return std::abs(c * (p.x + p.y)) <= h && std::abs(c * (p.y - p.x)) <= h;
      };
      break;
    }
    case ScenarioKind::Annulus: {
      const double r = annulus_inner_radius(n, spacing);
      half = 2.0 * r;
      inside = [r](Vec2 p) {
        const double d = norm(p);
        return d >= r && d <= 2.0 * r;
      };
      break;
    }
    default:
      break;
  }

  const double min_dist = 0.8 * spacing;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-half, half);
  CellGrid grid(min_dist);
  std::vector<Vec2> out;
  out.reserve(n);
  const std::size_t budget = 5000 * n;
  for (std::size_t attempt = 0; attempt < budget && out.size() < n; ++attempt) {
    const Vec2 p{coord(rng), coord(rng)};
    if (!inside(p)) continue;
    bool ok = true;
    grid.for_near(p, [&](int j) {
      if (ok && distance(p, out[static_cast<std::size_t>(j)]) < min_dist) ok = false;
    });
    if (!ok) continue;
    grid.insert(p, static_cast<int>(out.size()));
    out.push_back(p);
  }
  if (out.size() < n)
    throw Error(ErrorCode::PlacementFailure,
                fmt::format("placed only {} of {} robots in a {} region after {} darts", out.size(),
                            n, to_string(kind), budget));
  return out;
}

SwarmScenario generate_scenario(ScenarioKind kind, double size_factor, double spacing,
                                std::uint64_t seed, const ChannelModel& channel,
                                std::optional<double> r0_override) {
  const auto pos = generate_positions(kind, size_factor, spacing, seed);
  return SwarmScenario::from_positions(pos, channel, r0_override);
}

}  // namespace vpe
