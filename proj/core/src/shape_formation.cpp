#include "vpe/shape_formation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>
#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe {

double shoelace_area(std::span<const Vec2> polygon) {
  double a = 0.0;
  const auto n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) a += cross(polygon[i], polygon[(i + 1) % n]);
  return 0.5 * a;
}

namespace {

int orient(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_touch(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

Vec2 closest_on_segment(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return a;
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return a + ab * t;
}

}  // namespace

bool is_simple_polygon(std::span<const Vec2> polygon) {
  const auto n = polygon.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (polygon[i] == polygon[(i + 1) % n]) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon[i], b = polygon[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Vec2 c = polygon[j], d = polygon[(j + 1) % n];
      if (adjacent) {
        // neighbours share one vertex; they must not fold back onto each other
        const Vec2 shared = j == i + 1 ? b : a;
        const Vec2 p = j == i + 1 ? a : b;
        const Vec2 q = j == i + 1 ? d : c;
        if (orient(p, shared, q) == 0 && dot(p - shared, q - shared) > 0.0) return false;
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

TargetShape::TargetShape(std::vector<Vec2> polygon) : polygon_(std::move(polygon)) {
  if (!is_simple_polygon(polygon_))
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("target outline with {} vertices is not a simple polygon", polygon_.size()));
  area_ = std::abs(shoelace_area(polygon_));
  if (!(area_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "target outline has zero area");
  box_.lo = box_.hi = polygon_.front();
  for (const auto& v : polygon_) {
    box_.lo.x = std::min(box_.lo.x, v.x);
    box_.lo.y = std::min(box_.lo.y, v.y);
    box_.hi.x = std::max(box_.hi.x, v.x);
    box_.hi.y = std::max(box_.hi.y, v.y);
  }
}

Vec2 TargetShape::centroid() const noexcept {
  double cx = 0.0, cy = 0.0;
  const auto n = polygon_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = polygon_[i], b = polygon_[(i + 1) % n];
    const double w = cross(a, b);
    cx += (a.x + b.x) * w;
    cy += (a.y + b.y) * w;
  }
  const double a6 = 6.0 * shoelace_area(polygon_);
  return {cx / a6, cy / a6};
}

bool TargetShape::contains(Vec2 p) const noexcept {
  bool inside = false;
  const auto n = polygon_.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = polygon_[i], b = polygon_[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

TargetShape::Nearest TargetShape::nearest_boundary_point(Vec2 p) const noexcept {
  Nearest best;
  best.distance = std::numeric_limits<double>::infinity();
  const auto n = polygon_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 q = closest_on_segment(polygon_[i], polygon_[(i + 1) % n], p);
    const double d = distance(p, q);
    if (d < best.distance) best = {q, i, d};
  }
  return best;
}

TargetShape TargetShape::translated(Vec2 offset) const {
  auto v = polygon_;
  for (auto& p : v) p += offset;
  return TargetShape(std::move(v));
}

TargetShape TargetShape::scaled_to_area(double area) const {
  if (!(area > 0.0)) throw Error(ErrorCode::InvalidArgument, "target area must be > 0");
  const double s = std::sqrt(area / area_);
  const Vec2 c = centroid();
  auto v = polygon_;
  for (auto& p : v) p = c + (p - c) * s;
  return TargetShape(std::move(v));
}

TargetShape TargetShape::triangle(double area, Vec2 center) {
  if (!(area > 0.0)) throw Error(ErrorCode::InvalidArgument, "target area must be > 0");
  const double side = std::sqrt(4.0 * area / std::sqrt(3.0));
  const double h = side * std::sqrt(3.0) / 2.0;
  return TargetShape({{center.x - side / 2, center.y - h / 3},
                      {center.x + side / 2, center.y - h / 3},
                      {center.x, center.y + 2 * h / 3}});
}

TargetShape TargetShape::letter_k(double area, Vec2 center) {
  // stem on the left, two arms meeting it at mid height
  TargetShape raw({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.2}, {2.2, 0.0}, {3.4, 0.0}, {1.9, 1.5},
                   {3.4, 3.0}, {2.2, 3.0}, {1.0, 1.8}, {1.0, 3.0}, {0.0, 3.0}});
  const auto scaled = raw.scaled_to_area(area);
  return scaled.translated(center - scaled.centroid());
}

TargetShape TargetShape::square(double side, Vec2 center) {
  const double h = side / 2;
  return TargetShape({{center.x - h, center.y - h},
                      {center.x + h, center.y - h},
                      {center.x + h, center.y + h},
                      {center.x - h, center.y + h}});
}

void FormationParams::validate() const {
  for (auto [v, name] : {std::pair{c1, "c1"}, {c2, "c2"}, {i0, "i0"}, {k_prime, "k_prime"},
                         {c3, "c3"}, {c4, "c4"}, {step_cap, "step_cap"}})
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be > 0, got {}", name, v));
  if (initial_loc_iters < 0 || reloc_iters < 0)
    throw Error(ErrorCode::InvalidArgument, "localization iteration counts must be >= 0");
}

SensedPair sense_repulsion(const SwarmScenario& scenario, int robot, Vec2 axis, double k_prime) {
  SensedPair out;
  const Vec2 ri = scenario.position(robot);
  for (SparseMatrix::InnerIterator it(scenario.gamma(), robot); it; ++it) {
    const double proj = dot(normalized(scenario.position(static_cast<int>(it.col())) - ri), axis);
    out.plus += it.value() * std::exp(k_prime * proj);
    out.minus += it.value() * std::exp(-k_prime * proj);
  }
  return out;
}

namespace {

double sign_of(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

double repulsive_component(const SensedPair& s, const FormationParams& p) {
  return p.c1 * std::tanh(p.c2 * (std::max(s.plus, s.minus) - p.i0)) * sign_of(s.minus - s.plus);
}

}  // namespace

Vec2 repulsive_factor(const SwarmScenario& scenario, int robot, const FormationParams& params) {
  const auto sx = sense_repulsion(scenario, robot, scenario.x_axis(), params.k_prime);
  const auto sy = sense_repulsion(scenario, robot, scenario.y_axis(), params.k_prime);
  const double dx = repulsive_component(sx, params);
  const double dy = repulsive_component(sy, params);
  // components are along the robots' own axes
  return scenario.x_axis() * dx + scenario.y_axis() * dy;
}

AttractiveResult attractive_factor(Vec2 chi, const TargetShape& shape, const FormationParams& params) {
  const auto near = shape.nearest_boundary_point(chi);
  const Vec2 f = near.point - chi;
  const double len = norm(f);
  if (len == 0.0) return {{}, true};
  const double s = shape.contains(chi) ? -1.0 : 1.0;  // 2 in(chi) - 1, in() = 1 outside
  const double mag = params.c3 * (1.0 + std::tanh(params.c4 * s * len));
  return {f * (mag * s / len), false};
}

double similarity_cost(std::span<const Vec2> poses, const TargetShape& shape, double sigma) {
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "similarity needs at least one robot");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  const auto box = shape.bounding_box();
  const double a = shape.area();
  const double step = sigma / 4.0;
  const auto nx = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(box.width() / step)));
  const auto ny = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(box.height() / step)));
  const double hx = box.width() / static_cast<double>(nx);
  const double hy = box.height() / static_cast<double>(ny);
  const auto l = static_cast<Eigen::Index>(poses.size());

  // the Gaussian sum factorises per axis, so the density grid is ex^T * ey
  Eigen::MatrixXd ex(l, nx), ey(l, ny);
  const double inv = 1.0 / (sigma * sigma);
  for (Eigen::Index r = 0; r < l; ++r) {
    const Vec2 p = poses[static_cast<std::size_t>(r)];
    for (Eigen::Index i = 0; i < nx; ++i) {
      const double d = box.lo.x + hx * (static_cast<double>(i) + 0.5) - p.x;
      ex(r, i) = std::exp(-d * d * inv);
    }
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double d = box.lo.y + hy * (static_cast<double>(j) + 0.5) - p.y;
      ey(r, j) = std::exp(-d * d * inv);
    }
  }
  const Eigen::MatrixXd density =
      (ex.transpose() * ey) * (a / (std::numbers::pi * sigma * sigma * static_cast<double>(l)));

  // over the plane: int_inside |1 - rho| + (total mass A - mass inside)
  double inner = 0.0, mass_in = 0.0;
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double x = box.lo.x + hx * (static_cast<double>(i) + 0.5);
    for (Eigen::Index j = 0; j < ny; ++j) {
      const Vec2 c{x, box.lo.y + hy * (static_cast<double>(j) + 0.5)};
      if (!shape.contains(c)) continue;
      const double rho = density(i, j);
      inner += std::abs(1.0 - rho);
      mass_in += rho;
    }
  }
  inner *= hx * hy;
  mass_in *= hx * hy;
  return (inner + std::max(0.0, a - mass_in)) / (2.0 * a);
}

double similarity(std::span<const Vec2> poses, const TargetShape& shape,
                  std::optional<double> spacing) {
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "similarity needs at least one robot");
  const double sp = spacing ? *spacing : std::sqrt(shape.area() / static_cast<double>(poses.size()));
  if (!(sp > 0.0)) throw Error(ErrorCode::InvalidArgument, "spacing must be > 0");
  double lo = 0.1 * sp, hi = 5.0 * sp;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  double fc = similarity_cost(poses, shape, c), fd = similarity_cost(poses, shape, d);
  for (int it = 0; it < 25; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - g * (hi - lo);
      fc = similarity_cost(poses, shape, c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (hi - lo);
      fd = similarity_cost(poses, shape, d);
    }
  }
  return std::clamp(1.0 - std::min(fc, fd), 0.0, 1.0);
}

Localizer Localizer::matrix(VpeParams params) {
  params.validate();
  Localizer l;
  l.kind_ = Kind::Matrix;
  l.vpe_ = params;
  return l;
}

Localizer Localizer::optical(OpticalParams params, SensorModel sensors) {
  params.validate();
  sensors.validate();
  Localizer l;
  l.kind_ = Kind::Optical;
  l.optical_ = params;
  l.sensors_ = sensors;
  return l;
}

void Localizer::reset() {
  warm_.reset();
  calls_ = 0;
}

std::vector<Vec2> Localizer::localize(const SwarmScenario& scenario, long iterations) {
  const auto stop = StopCriterion::fixed(iterations);
  RunReport rep;
  if (warm_ && warm_->first.xi_plus.size() != static_cast<Eigen::Index>(scenario.size())) warm_.reset();
  if (kind_ == Kind::Matrix) {
    RunOptions opt;
    opt.axes = AxisSet::XY;
    if (warm_) {
      opt.initial_x = warm_->first;
      opt.initial_y = warm_->second;
    }
    rep = run_localization(scenario, vpe_, stop, opt);
  } else {
    OpticalRunOptions opt;
    opt.axes = AxisSet::XY;
    if (warm_) {
      opt.initial_x = warm_->first;
      opt.initial_y = warm_->second;
    }
    // fresh noise per refresh
    SensorModel s = sensors_;
    s.rng_seed = sensors_.rng_seed + static_cast<std::uint64_t>(calls_) * 0x9e3779b97f4a7c15ULL;
    rep = run_optical_localization(scenario, optical_, s, stop, opt);
  }
  ++calls_;
  auto renorm = [](VpeState st) {
    st.xi_plus = normalize(st.xi_plus);
    st.xi_minus = normalize(st.xi_minus);
    return st;
  };
  warm_ = std::pair{renorm(rep.final_x), renorm(rep.final_y)};
  std::vector<Vec2> chi(scenario.size());
  const Vec2 ax = scenario.x_axis(), ay = scenario.y_axis();
  for (std::size_t i = 0; i < chi.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    chi[i] = ax * rep.chi_x[k] + ay * rep.chi_y[k];
  }
  return chi;
}

std::vector<Vec2> poses_in_estimate_frame(std::span<const Vec2> poses, std::span<const Vec2> chi) {
  if (poses.size() != chi.size())
    throw Error(ErrorCode::InvalidArgument, "poses and estimates differ in length");
  Vec2 offset;
  for (std::size_t i = 0; i < poses.size(); ++i) offset += chi[i] - poses[i];
  if (!poses.empty()) offset = offset / static_cast<double>(poses.size());
  std::vector<Vec2> out(poses.begin(), poses.end());
  for (auto& p : out) p += offset;
  return out;
}

std::vector<Vec2> formation_displacements(const FormationState& state,
                                          const SwarmScenario& scenario, const TargetShape& shape,
                                          const FormationParams& params) {
  const auto l = scenario.size();
  if (state.chi.size() != l || state.poses.size() != l)
    throw Error(ErrorCode::InvalidArgument, "formation state does not match the scenario");
  std::vector<Vec2> d(l);
  for (std::size_t i = 0; i < l; ++i) {
    Vec2 step = attractive_factor(state.chi[i], shape, params).d +
                repulsive_factor(scenario, static_cast<int>(i), params);
    const double len = norm(step);
    if (len > params.step_cap) step *= params.step_cap / len;
    d[i] = step;
  }
  return d;
}

FormationStepResult formation_step(const FormationState& state, const SwarmScenario& scenario,
                                   const TargetShape& shape, const FormationParams& params,
                                   Localizer& localizer) {
  params.validate();
  const auto d = formation_displacements(state, scenario, shape, params);
  FormationState next;
  next.poses = state.poses;
  double moved = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    next.poses[i] += d[i];
    moved = std::max(moved, norm(d[i]));
  }
  std::optional<SwarmScenario> rebuilt;
  try {
    rebuilt.emplace(scenario.with_positions(next.poses));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DisconnectedSwarm)
      throw Error(ErrorCode::SwarmFragmented,
                  fmt::format("swarm fragmented at step {}: {}", state.step_index + 1, e.what()));
    throw;
  }
  next.chi = localizer.localize(*rebuilt, params.reloc_iters);
  next.step_index = state.step_index + 1;
  return {std::move(next), std::move(*rebuilt), moved};
}

namespace {

double mean_estimate_error(std::span<const Vec2> poses, std::span<const Vec2> chi) {
  if (poses.empty()) return 0.0;
  Vec2 pc, cc;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    pc += poses[i];
    cc += chi[i];
  }
  const double n = static_cast<double>(poses.size());
  pc = pc / n;
  cc = cc / n;
  double e = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) e += distance(chi[i] - cc, poses[i] - pc);
  return e / n;
}

}  // namespace

FormationReport run_formation(const SwarmScenario& initial, const TargetShape& shape,
                              const FormationParams& params, Localizer& localizer,
                              const FormationRunOptions& options) {
  params.validate();
  FormationReport report;
  FormationState state;
  state.poses = initial.positions();
  state.chi = localizer.localize(initial, params.initial_loc_iters);
  SwarmScenario scenario = initial;

  auto evaluate = [&](const FormationState& s) {
    FormationStepRecord rec;
    rec.step = s.step_index;
    rec.similarity =
        similarity(poses_in_estimate_frame(s.poses, s.chi), shape, options.similarity_spacing);
    rec.mean_error = mean_estimate_error(s.poses, s.chi);
    return rec;
  };
  auto observe = [&](const FormationState& s, bool force) {
    const bool eval = force || (options.evaluate_every > 0 && s.step_index % options.evaluate_every == 0);
    if (eval) {
      report.steps.push_back(evaluate(s));
      if (options.on_step) options.on_step(s, report.steps.back());
    }
    if (options.snapshot_every > 0 && s.step_index % options.snapshot_every == 0)
      report.snapshots.push_back(s);
  };

  observe(state, true);
  for (long step = 0; step < options.steps; ++step) {
    try {
      auto r = formation_step(state, scenario, shape, params, localizer);
      state = std::move(r.state);
      scenario = std::move(r.scenario);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SwarmFragmented) throw;
      report.fragmented = true;
      report.failure = e.what();
      break;
    }
    observe(state, step + 1 == options.steps);
  }
  if (report.snapshots.empty() || report.snapshots.back().step_index != state.step_index)
    report.snapshots.push_back(state);
  report.final_state = state;
  return report;
}

}  // namespace vpe
