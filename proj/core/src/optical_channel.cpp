#include "vpe/optical_channel.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe {

double EmissionProfile::toward(Vec2 direction) const noexcept {
  return base_intensity * std::exp(anisotropy_k * dot(normalized(direction), reference_axis));
}

std::string_view to_string(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::UniformMultiplicative: return "uniform";
    case NoiseKind::GaussianMultiplicative: return "gaussian";
    case NoiseKind::AdditiveFloor: return "additive";
  }
  return "uniform";
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "uniform") return NoiseKind::UniformMultiplicative;
  if (text == "gaussian") return NoiseKind::GaussianMultiplicative;
  if (text == "additive") return NoiseKind::AdditiveFloor;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown noise kind '{}'", text));
}

std::string_view to_string(CalibrationMode mode) noexcept {
  switch (mode) {
    case CalibrationMode::None: return "none";
    case CalibrationMode::Normalize: return "normalize";
    case CalibrationMode::Distributed: return "distributed";
  }
  return "none";
}

CalibrationMode parse_calibration_mode(std::string_view text) {
  if (text == "none") return CalibrationMode::None;
  if (text == "normalize") return CalibrationMode::Normalize;
  if (text == "distributed") return CalibrationMode::Distributed;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown calibration mode '{}'", text));
}

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kSkipStream = 0x51c1b00cULL;

}  // namespace

double hashed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t round,
                      std::uint64_t robot) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ round);
  h = splitmix64(h ^ robot);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double SensorModel::perturb(double value, std::uint64_t stream, long round, int robot) const noexcept {
  const double biased = value * (1.0 + bias);
  if (noise_fraction == 0.0) return biased;
  const auto r = static_cast<std::uint64_t>(round);
  const auto id = static_cast<std::uint64_t>(robot);
  const double u = hashed_uniform(rng_seed, stream, r, id);
  switch (kind) {
    case NoiseKind::UniformMultiplicative:
      return biased * (1.0 + noise_fraction * (2.0 * u - 1.0));
    case NoiseKind::GaussianMultiplicative: {
      const double u2 = hashed_uniform(rng_seed, stream ^ 0xa5a5a5a5ULL, r, id);
      const double z = std::sqrt(-2.0 * std::log1p(-u)) * std::cos(2.0 * std::numbers::pi * u2);
      return std::max(0.0, biased * (1.0 + noise_fraction * z));
    }
    case NoiseKind::AdditiveFloor:
      return std::max(0.0, biased + noise_fraction * (2.0 * u - 1.0));
  }
  return biased;
}

bool SensorModel::skips(std::uint64_t stream, long round, int robot) const noexcept {
  if (skip_probability <= 0.0) return false;
  return hashed_uniform(rng_seed, stream ^ kSkipStream, static_cast<std::uint64_t>(round),
                        static_cast<std::uint64_t>(robot)) < skip_probability;
}

void SensorModel::validate() const {
  if (!(noise_fraction >= 0.0) || !std::isfinite(noise_fraction))
    throw Error(ErrorCode::InvalidArgument, "noise_fraction must be >= 0");
  if (kind == NoiseKind::UniformMultiplicative && noise_fraction >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "uniform multiplicative noise must be < 1");
  if (!(bias > -1.0) || !std::isfinite(bias))
    throw Error(ErrorCode::InvalidArgument, "sensor bias must be > -1");
  if (!(skip_probability >= 0.0 && skip_probability < 1.0))
    throw Error(ErrorCode::InvalidArgument, "skip_probability must be in [0, 1)");
}

void OpticalParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be > 0, got {}", name, v));
  };
  positive(k1, "k1");
  positive(k2, "k2");
  positive(k3, "k3");
  positive(k4, "k4");
  positive(k, "k");
  if (calibrate_every < 0) throw Error(ErrorCode::InvalidArgument, "calibrate_every must be >= 0");
  if (calibration == CalibrationMode::Distributed && calibration_rounds <= 0)
    throw Error(ErrorCode::InvalidArgument, "distributed calibration needs calibration_rounds > 0");
}

VpeParams OpticalParams::matrix_equivalent() const {
  VpeParams p;
  p.k = k;
  p.k1 = k1;
  p.variant = TransferVariant::UnitDirection;
  p.normalize_every = calibration == CalibrationMode::None ? 0 : calibrate_every;
  return p;
}

namespace {

// Per-pair channel gains for one emission pattern family, computed once for
// a static swarm: forward(i) lists Gamma(j,i) exp(-ks r_ji.axis) (light
// from j that robot i sees under the VP emission), backward(i) the mirrored
// pattern used for the reference signal.
class Photometry {
 public:
  Photometry(const SwarmScenario& sc, double k, int sign, Vec2 axis) {
    const auto& g = sc.gamma();
    const auto l = static_cast<Eigen::Index>(sc.size());
    forward_.resize(l, l);
    backward_.resize(l, l);
    std::vector<Eigen::Triplet<double>> fw, bw;
    fw.reserve(static_cast<std::size_t>(g.nonZeros()));
    bw.reserve(static_cast<std::size_t>(g.nonZeros()));
    const double ks = k * sign;
    for (Eigen::Index i = 0; i < g.outerSize(); ++i) {
      const Vec2 ri = sc.position(static_cast<int>(i));
      for (SparseMatrix::InnerIterator it(g, i); it; ++it) {
        const Vec2 dir = normalized(ri - sc.position(static_cast<int>(it.col())));  // j -> i
        const double proj = dot(dir, axis);
        fw.emplace_back(i, it.col(), it.value() * std::exp(-ks * proj));
        bw.emplace_back(i, it.col(), it.value() * std::exp(ks * proj));
      }
    }
    forward_.setFromTriplets(fw.begin(), fw.end());
    backward_.setFromTriplets(bw.begin(), bw.end());
  }

  Eigen::VectorXd signal(const Eigen::VectorXd& xi, double k1, const SensorModel& sensors,
                         long round, std::uint64_t stream, const std::vector<char>* skipping) const {
    Eigen::VectorXd s(xi.size());
    for (Eigen::Index i = 0; i < forward_.outerSize(); ++i) {
      double acc = 0.0;
      for (SparseMatrix::InnerIterator it(forward_, i); it; ++it) {
        if (skipping && (*skipping)[static_cast<std::size_t>(it.col())]) continue;
        acc += it.value() * (k1 * xi[it.col()]);
      }
      s[i] = sensors.perturb(acc, stream, round, static_cast<int>(i));
    }
    return s;
  }

  Eigen::VectorXd reference(double k2, const SensorModel& sensors, long round,
                            std::uint64_t stream) const {
    Eigen::VectorXd c(backward_.rows());
    SensorModel unbiased = sensors;
    unbiased.bias = 0.0;
    for (Eigen::Index i = 0; i < backward_.outerSize(); ++i) {
      double acc = 0.0;
      for (SparseMatrix::InnerIterator it(backward_, i); it; ++it) acc += it.value() * k2;
      c[i] = unbiased.perturb(acc, stream, round, static_cast<int>(i));
    }
    return c;
  }

 private:
  SparseMatrix forward_, backward_;
};

std::uint64_t field_stream(int axis_index, int sign, int quantity) {
  return splitmix64(static_cast<std::uint64_t>(axis_index * 8 + (sign > 0 ? 0 : 4) + quantity));
}

void check_reference(const Eigen::VectorXd& c, double ka, double kb) {
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double f = c[i] * ka / kb;
    if (f >= 1.0)
      throw Error(ErrorCode::OverdrawnRobot,
                  fmt::format("robot {} would send a fraction {:.6g} >= 1 of its VPs", i, f));
  }
}

}  // namespace

Eigen::VectorXd sense_signal(const SwarmScenario& scenario, const Eigen::VectorXd& xi, double k1,
                             double k, int axis_sign, Vec2 axis, const SensorModel& sensors,
                             long round, std::uint64_t stream, const std::vector<char>* skipping) {
  return Photometry(scenario, k, axis_sign, axis).signal(xi, k1, sensors, round, stream, skipping);
}

Eigen::VectorXd sense_reference(const SwarmScenario& scenario, double k2, double k, int axis_sign,
                                Vec2 axis, const SensorModel& sensors, long round,
                                std::uint64_t stream) {
  return Photometry(scenario, k, axis_sign, axis).reference(k2, sensors, round, stream);
}

SenseResult sense_round(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                        const OpticalParams& params, const SensorModel& sensors, int axis_sign,
                        Vec2 axis, long round, std::uint64_t stream) {
  if (xi.size() != static_cast<Eigen::Index>(scenario.size()))
    throw Error(ErrorCode::InvalidArgument, "xi length differs from robot count");
  if (axis_sign != 1 && axis_sign != -1)
    throw Error(ErrorCode::InvalidArgument, "axis_sign must be +1 or -1");
  const Photometry ph(scenario, params.k, axis_sign, axis);
  return {ph.signal(xi, params.k1, sensors, round, splitmix64(stream), nullptr),
          ph.reference(params.k2, sensors, round, splitmix64(stream + 1))};
}

SenseResult sense_round(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                        const OpticalParams& params, const SensorModel& sensors, int axis_sign) {
  return sense_round(scenario, xi, params, sensors, axis_sign, scenario.x_axis());
}

double optical_update(double xi, double s, double c, double k1, double k2, int robot) {
  const double f = c * k1 / k2;
  if (!(f < 1.0))
    throw Error(ErrorCode::OverdrawnRobot,
                robot >= 0
                    ? fmt::format("robot {} would send a fraction {:.6g} >= 1 of its VPs", robot, f)
                    : fmt::format("update would send a fraction {:.6g} >= 1 of the VPs", f));
  return (1.0 - f) * xi + s;
}

Eigen::VectorXd calibrate_total(const SwarmScenario& scenario, const Eigen::VectorXd& xi,
                                double k3, double k4, int n_m, const SensorModel& sensors,
                                long round, std::uint64_t stream) {
  if (xi.size() != static_cast<Eigen::Index>(scenario.size()))
    throw Error(ErrorCode::InvalidArgument, "xi length differs from robot count");
  if (!(k3 > 0.0) || !(k4 > 0.0)) throw Error(ErrorCode::InvalidArgument, "k3, k4 must be > 0");
  if (n_m < 0) throw Error(ErrorCode::InvalidArgument, "n_m must be >= 0");
  const Photometry ph(scenario, 0.0, 1, scenario.x_axis());
  const long base = round * (static_cast<long>(n_m) + 1);
  const Eigen::VectorXd c = ph.reference(k4, sensors, base, splitmix64(stream));
  check_reference(c, k3, k4);
  Eigen::VectorXd aux = xi;
  for (int n = 0; n < n_m; ++n) {
    const Eigen::VectorXd s = ph.signal(aux, k3, sensors, base + n + 1, splitmix64(stream + 1), nullptr);
    for (Eigen::Index i = 0; i < aux.size(); ++i)
      aux[i] = optical_update(aux[i], s[i], c[i], k3, k4, static_cast<int>(i));
  }
  return xi.cwiseQuotient(aux);
}

namespace {

struct Field {
  int axis_index = 0;
  int sign = 1;
  Vec2 axis;
  Photometry ph;
  Eigen::VectorXd c;
  Eigen::VectorXd xi;
  Eigen::VectorXd last_s;
};

}  // namespace

OpticalRunReport run_optical_localization(const SwarmScenario& scenario,
                                          const OpticalParams& params, const SensorModel& sensors,
                                          const StopCriterion& stop,
                                          const OpticalRunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  params.validate();
  sensors.validate();
  const auto l = scenario.size();
  const auto n_robots = static_cast<Eigen::Index>(l);
  const bool two = options.axes == AxisSet::XY;
  const double r0 = scenario.r0();
  ConvergenceMonitor monitor(stop, r0, two);

  std::vector<Field> fields;
  auto add = [&](int ai, Vec2 axis, const std::optional<VpeState>& init) {
    for (int sign : {+1, -1}) {
      if (!params.dual && sign < 0) continue;
      Field f{ai, sign, axis, Photometry(scenario, params.k, sign, axis), {}, {}, {}};
      if (init) {
        f.xi = sign > 0 ? init->xi_plus : init->xi_minus;
        if (f.xi.size() != n_robots)
          throw Error(ErrorCode::InvalidArgument, "warm-start state has the wrong length");
      } else {
        f.xi = Eigen::VectorXd::Ones(n_robots);
      }
      f.c = f.ph.reference(params.k2, sensors, -1, field_stream(ai, sign, 1));
      check_reference(f.c, params.k1, params.k2);
      fields.push_back(std::move(f));
    }
  };
  add(0, scenario.x_axis(), options.initial_x);
  if (two) add(1, scenario.y_axis(), options.initial_y);

  auto chi_of = [&](int ai) -> Eigen::VectorXd {
    const Field* plus = nullptr;
    const Field* minus = nullptr;
    for (const auto& f : fields)
      if (f.axis_index == ai) (f.sign > 0 ? plus : minus) = &f;
    if (params.dual) return extract_positions({plus->xi, minus->xi, 0}, r0, params.k);
    return extract_single(plus->xi, r0, params.k);
  };

  OpticalRunReport report;
  Eigen::VectorXd chi_x, chi_y;
  auto extract = [&] {
    chi_x = chi_of(0);
    if (two) chi_y = chi_of(1);
  };
  auto record = [&](long n) {
    const auto e = localization_error(scenario, chi_x, two ? &chi_y : nullptr);
    report.error_trace.push_back({n, e.mean_error, e.max_error});
    report.chi_trace.push_back({n, chi_x, two ? chi_y : Eigen::VectorXd()});
    if (options.trace_sensing && !fields.empty()) {
      const auto& fp = fields[0];
      const Field* fm = params.dual ? &fields[1] : &fields[0];
      for (Eigen::Index i = 0; i < n_robots; ++i)
        report.sense_trace.push_back({n, static_cast<int>(i),
                                      fp.last_s.size() ? fp.last_s[i] : 0.0, fp.c[i], fp.xi[i],
                                      fm->xi[i]});
    }
  };
  auto centroid = [&] {
    if (options.record_centroid) report.centroid_x.push_back(chi_x.size() ? chi_x.mean() : 0.0);
  };

  const bool want_skip = sensors.skip_probability > 0.0;
  std::vector<char> skipping(l, 0);

  long n = 0;
  extract();
  centroid();
  if (options.trace_every > 0) record(0);
  bool done = monitor.check(0, chi_x, two ? &chi_y : nullptr);
  while (!done) {
    if (monitor.budget_exhausted(n)) break;
    if (want_skip)
      for (std::size_t i = 0; i < l; ++i) skipping[i] = sensors.skips(0, n, static_cast<int>(i));
    for (auto& f : fields) {
      if (params.recalibrate_c_every_round) {
        f.c = f.ph.reference(params.k2, sensors, n, field_stream(f.axis_index, f.sign, 1));
        check_reference(f.c, params.k1, params.k2);
      }
      f.last_s = f.ph.signal(f.xi, params.k1, sensors, n, field_stream(f.axis_index, f.sign, 0),
                             want_skip ? &skipping : nullptr);
      for (Eigen::Index i = 0; i < n_robots; ++i) {
        if (want_skip && skipping[static_cast<std::size_t>(i)]) continue;
        f.xi[i] = optical_update(f.xi[i], f.last_s[i], f.c[i], params.k1, params.k2,
                                 static_cast<int>(i));
      }
    }
    ++n;
    if (params.calibration != CalibrationMode::None && params.calibrate_every > 0 &&
        n % params.calibrate_every == 0) {
      for (auto& f : fields) {
        if (params.calibration == CalibrationMode::Normalize) {
          f.xi = normalize(f.xi);
        } else {
          f.xi = calibrate_total(scenario, f.xi, params.k3, params.k4, params.calibration_rounds,
                                 sensors, n, field_stream(f.axis_index, f.sign, 2));
        }
      }
    }
    extract();
    centroid();
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
  if (options.trace_every > 0 &&
      (report.error_trace.empty() || report.error_trace.back().iteration != n))
    record(n);
  auto state_of = [&](int ai) {
    VpeState s;
    for (const auto& f : fields)
      if (f.axis_index == ai) (f.sign > 0 ? s.xi_plus : s.xi_minus) = f.xi;
    if (!params.dual) s.xi_minus = s.xi_plus;
    s.iteration = n;
    return s;
  };
  report.final_x = state_of(0);
  if (two) report.final_y = state_of(1);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace vpe
