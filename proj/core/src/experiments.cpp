#include "vpe/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "chain_bound.hpp"
#include "vpe/error.hpp"
#include "vpe/scenario_io.hpp"
#include "vpe/svg.hpp"

namespace vpe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string g(double v) { return fmt::format("{:.10g}", v); }

VpeParams transfer_params(const ExperimentConfig& cfg) {
  return cfg.variant == Variant::Optical ? cfg.optical.matrix_equivalent() : cfg.vpe;
}

AxisSet axes_for(const ExperimentConfig& cfg, ScenarioKind kind) {
  return kind == ScenarioKind::Line ? AxisSet::X : cfg.axes;
}

double golden_min(double lo, double hi, int iters, const std::function<double(double)>& f) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

// per-robot error after centroid alignment
std::vector<double> robot_errors(const SwarmScenario& sc, const Eigen::VectorXd& cx,
                                 const Eigen::VectorXd* cy) {
  const auto tx = axis_coordinates(sc, sc.x_axis());
  const double ox = tx.mean() - cx.mean();
  std::vector<double> e(sc.size());
  if (cy && cy->size() > 0) {
    const auto ty = axis_coordinates(sc, sc.y_axis());
    const double oy = ty.mean() - cy->mean();
    for (Eigen::Index i = 0; i < cx.size(); ++i)
      e[static_cast<std::size_t>(i)] = std::hypot(cx[i] + ox - tx[i], (*cy)[i] + oy - ty[i]);
  } else {
    for (Eigen::Index i = 0; i < cx.size(); ++i)
      e[static_cast<std::size_t>(i)] = std::abs(cx[i] + ox - tx[i]);
  }
  return e;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Writes files into one output directory and lists them in manifest.json.
class Outputs {
 public:
  Outputs(const ExperimentConfig& cfg, std::string command, const fs::path& dir)
      : cfg_(cfg), command_(std::move(command)), dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      throw Error(ErrorCode::IoError,
                  fmt::format("cannot create output directory {}: {}", dir_.string(), ec.message()));
  }

  std::string provenance() const {
    return fmt::format("vpe {} | config {} | hash {}", command_, cfg_.name, cfg_.hash_hex());
  }

  void write(const std::string& name, const std::string& content) {
    svg::write_file(dir_ / name, content);
    files_.push_back(name);
  }

  void svg_plot(const std::string& name, svg::PlotSpec spec, const std::vector<svg::Series>& s) {
    spec.provenance = provenance();
    write(name, svg::line_plot(spec, s));
  }

  void svg_snapshot(const std::string& name, svg::Snapshot snap) {
    snap.provenance = provenance();
    write(name, svg::snapshot(snap));
  }

  // results go in the manifest; wall-clock numbers only in summary.txt
  void finish(json results, const std::vector<std::string>& summary) {
    std::string text = fmt::format("command: {}\nconfig: {}\nconfig_hash: {}\n", command_,
                                   cfg_.name, cfg_.hash_hex());
    for (const auto& line : summary) text += line + "\n";
    write("summary.txt", text);
    json m;
    m["command"] = command_;
    m["config_hash"] = cfg_.hash_hex();
    m["config"] = json::parse(cfg_.canonical_json());
    m["config"].erase("out");
    m["config"].erase("threads");
    m["results"] = std::move(results);
    std::vector<std::string> listed = files_;
    std::sort(listed.begin(), listed.end());
    m["files"] = listed;
    svg::write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  const ExperimentConfig& cfg_;
  std::string command_;
  fs::path dir_;
  std::vector<std::string> files_;
};

StopCriterion make_stop(const ExperimentConfig& cfg, const SwarmScenario& sc, AxisSet axes) {
  const auto& s = cfg.stop;
  switch (s.kind) {
    case StopCriterion::Kind::FixedIterations:
      return StopCriterion::fixed(s.fixed_iterations);
    case StopCriterion::Kind::SlidingWindow:
      return StopCriterion::sliding(s.window, s.window_fraction, s.max_iterations);
    case StopCriterion::Kind::Oracle:
      break;
  }
  const VpeParams p = transfer_params(cfg);
  if (cfg.variant == Variant::Optical && !cfg.optical.dual) {
    // one-sided runs are compared with the one-sided equilibrium
    auto single = [&](Vec2 axis) {
      const auto t = build_transition_matrix(transition_probabilities(sc, p, +1, axis), +1);
      OracleOptions opt;
      opt.compute_lambda2 = false;
      return perron_oracle(t, static_cast<double>(sc.size()), sc.r0(), p.k, opt).equilibrium_chi;
    };
    std::optional<Eigen::VectorXd> ry;
    if (axes == AxisSet::XY) ry = single(sc.y_axis());
    return StopCriterion::oracle(single(sc.x_axis()), ry, s.tolerance, s.max_iterations);
  }
  const auto eq = equilibrium(sc, p, axes);
  std::optional<Eigen::VectorXd> ry;
  if (axes == AxisSet::XY) ry = eq.y;
  return StopCriterion::oracle(eq.x, ry, s.tolerance, s.max_iterations);
}

int hardware_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : static_cast<int>(h);
}

}  // namespace

// ---------------------------------------------------------------------------

double range_floor_r0(double max_range) { return (std::floor(max_range) + 1.0) / 2.0; }

Equilibrium equilibrium(const SwarmScenario& scenario, const VpeParams& params, AxisSet axes) {
  Equilibrium eq;
  eq.x = equilibrium_positions(scenario, params, scenario.x_axis());
  if (axes == AxisSet::XY) eq.y = equilibrium_positions(scenario, params, scenario.y_axis());
  eq.error = localization_error(scenario, eq.x, axes == AxisSet::XY ? &eq.y : nullptr);
  return eq;
}

R0Fit optimize_r0(const SwarmScenario& scenario, const VpeParams& params, AxisSet axes,
                  double lo, double hi) {
  if (params.variant != TransferVariant::UnitDirection)
    throw Error(ErrorCode::InvalidArgument, "r0 optimization applies to the unit-direction rule");
  if (!(lo > 0.0 && hi > lo)) throw Error(ErrorCode::InvalidArgument, "bad r0 search bracket");
  const auto unit = scenario.with_r0(1.0);
  const auto eq = equilibrium(unit, params, axes);
  const bool two = axes == AxisSet::XY;
  auto err = [&](double r0) {
    Eigen::VectorXd x = eq.x * r0, y = two ? Eigen::VectorXd(eq.y * r0) : Eigen::VectorXd();
    return localization_error(scenario, x, two ? &y : nullptr);
  };
  const double best = golden_min(lo, hi, 60, [&](double r0) { return err(r0).mean_error; });
  const auto e = err(best);
  return {best, e.mean_error, e.max_error};
}

SwarmScenario build_scenario(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& s = cfg.scenario;
  std::optional<SwarmScenario> sc;
  std::optional<double> file_r0;
  if (!s.file.empty()) {
    auto file = load_scenario(s.file);
    file_r0 = file.r0;
    sc.emplace(file.to_scenario());
  } else {
    if (s.kind == ScenarioKind::Custom)
      throw Error(ErrorCode::ConfigError, "custom scenarios need scenario.file");
    const auto pos = generate_positions(s.kind, s.size_factor, s.spacing, seed);
    sc.emplace(SwarmScenario::from_positions(pos, s.channel));
  }
  if (s.r0) return sc->with_r0(*s.r0);
  if (file_r0) return *sc;
  switch (s.r0_rule) {
    case R0Rule::Weighted:
      return *sc;
    case R0Rule::RangeFloor:
      return sc->with_r0(range_floor_r0(sc->channel().max_range));
    case R0Rule::Optimized: {
      const auto p = transfer_params(cfg);
      if (p.variant != TransferVariant::UnitDirection) return *sc;
      const double sp = s.spacing;
      const auto fit = optimize_r0(*sc, p, axes_for(cfg, s.kind), 0.1 * sp, 10.0 * sp);
      return sc->with_r0(fit.r0);
    }
  }
  return *sc;
}

RunReport localize_scenario(const ExperimentConfig& cfg, const SwarmScenario& scenario,
                            std::uint64_t seed, bool trace_sensing) {
  const AxisSet axes = axes_for(cfg, cfg.scenario.kind);
  const auto stop = make_stop(cfg, scenario, axes);
  if (cfg.variant == Variant::Matrix) {
    RunOptions opt;
    opt.axes = axes;
    opt.trace_every = cfg.trace_every;
    return run_localization(scenario, cfg.vpe, stop, opt);
  }
  SensorModel sensors = cfg.sensor;
  sensors.rng_seed = seed;
  OpticalRunOptions opt;
  opt.axes = axes;
  opt.trace_every = cfg.trace_every;
  opt.trace_sensing = trace_sensing && cfg.trace_every > 0;
  return run_optical_localization(scenario, cfg.optical, sensors, stop, opt);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = std::min(x.size(), y.size());
  f.points = n;
  if (n == 0) return f;
  const double mx = std::accumulate(x.begin(), x.begin() + static_cast<long>(n), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.begin() + static_cast<long>(n), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) {
    f.intercept = my;
    return f;
  }
  f.degenerate = false;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(hardware_threads(threads)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

SweepResult run_sweep(const ExperimentConfig& cfg, bool iterate) {
  std::vector<double> ranges = cfg.sweep.max_ranges;
  if (ranges.empty()) ranges.push_back(cfg.scenario.channel.max_range);
  std::vector<double> sizes = cfg.sweep.size_factors;
  if (sizes.empty()) sizes.push_back(cfg.scenario.size_factor);
  const int seeds = cfg.sweep.seeds;

  struct Job {
    double range, size;
    int seed_index;
  };
  std::vector<Job> jobs;
  for (double r : ranges)
    for (double s : sizes)
      for (int k = 0; k < seeds; ++k) jobs.push_back({r, s, k});

  SweepResult out;
  out.rows.resize(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    ExperimentConfig c = cfg;
    c.scenario.channel.max_range = job.range;
    c.scenario.size_factor = job.size;
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(job.seed_index);
    const auto sc = build_scenario(c, seed);
    const AxisSet axes = axes_for(c, c.scenario.kind);
    SweepRow row;
    row.max_range = job.range;
    row.size_factor = job.size;
    row.seed_index = job.seed_index;
    row.seed = seed;
    row.robots = sc.size();
    row.r0 = sc.r0();
    const auto eq = equilibrium(sc, transfer_params(c), axes);
    row.eq_mean_error = eq.error.mean_error;
    row.eq_max_error = eq.error.max_error;
    if (iterate) {
      c.trace_every = 0;
      const auto noise_seed = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(j)));
      const auto rep = localize_scenario(c, sc, noise_seed);
      row.converged = rep.converged;
      row.iterations = rep.converged ? rep.converged_at : rep.iterations;
      row.mean_error = rep.mean_error;
      row.max_error = rep.max_error;
      row.wall_time_s = rep.wall_time_s;
    } else {
      row.converged = true;
      row.mean_error = eq.error.mean_error;
      row.max_error = eq.error.max_error;
    }
    out.rows[j] = row;
  });

  for (double r : ranges) {
    std::vector<double> fx, fy;
    for (double s : sizes) {
      std::vector<double> it, me, ee, r0s;
      for (const auto& row : out.rows)
        if (row.max_range == r && row.size_factor == s) {
          it.push_back(static_cast<double>(row.iterations));
          me.push_back(row.mean_error);
          ee.push_back(row.eq_mean_error);
          r0s.push_back(row.r0);
        }
      SweepPoint p;
      p.max_range = r;
      p.size_factor = s;
      p.runs = static_cast<int>(it.size());
      std::tie(p.iterations_mean, p.iterations_sd) = mean_sd(it);
      std::tie(p.mean_error_mean, p.mean_error_sd) = mean_sd(me);
      std::tie(p.eq_error_mean, p.eq_error_sd) = mean_sd(ee);
      p.r0_mean = mean_sd(r0s).first;
      out.points.push_back(p);
      fx.push_back(s);
      fy.push_back(p.iterations_mean);
    }
    out.fits.emplace_back(r, fit_line(fx, fy));
  }
  return out;
}

CalibrationStudyResult run_calibration_study(const ExperimentConfig& cfg) {
  const auto& cs = cfg.calibration;
  const auto sc = build_scenario(cfg, cfg.seed);
  CalibrationStudyResult res;
  res.r0 = sc.r0();

  SensorModel sensors = cfg.sensor;
  sensors.rng_seed = cfg.seed;
  OpticalRunOptions opt;
  opt.axes = AxisSet::X;
  opt.record_centroid = true;
  const auto stop = StopCriterion::fixed(cs.iterations);

  auto run = [&](CalibrationMode mode) {
    OpticalParams p = cfg.optical;
    p.calibration = mode;
    return run_optical_localization(sc, p, sensors, stop, opt).centroid_x;
  };
  res.centroid_off = run(CalibrationMode::None);
  res.centroid_on = run(cs.mode);

  auto drift = [&](const std::vector<double>& c, std::vector<double>& d, double& worst) {
    d.assign(c.size(), 0.0);
    worst = 0.0;
    const auto settle = static_cast<std::size_t>(cs.settle);
    if (settle >= c.size()) return;
    for (std::size_t n = settle; n < c.size(); ++n) {
      d[n] = std::abs(c[n] - c[settle]);
      worst = std::max(worst, d[n]);
    }
  };
  drift(res.centroid_off, res.drift_off, res.max_drift_off);
  drift(res.centroid_on, res.drift_on, res.max_drift_on);
  res.bounded = res.max_drift_on <= cs.drift_bound * res.r0;
  res.diverged = res.max_drift_off > cs.uncalibrated_floor * res.r0;
  return res;
}

std::vector<Vec2> formation_layout(const FormationConfig& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jit(-f.jitter, f.jitter);
  std::vector<Vec2> pos;
  pos.reserve(static_cast<std::size_t>(f.robots));
  for (int i = 0; i < f.robots; ++i) {
    const int c = i % f.columns, r = i / f.columns;
    pos.push_back({c * f.spacing + jit(rng), r * f.spacing + jit(rng)});
  }
  Vec2 mean;
  for (auto p : pos) mean += p;
  mean = mean / static_cast<double>(pos.size());
  for (auto& p : pos) p -= mean;
  return pos;
}

TargetShape formation_target(const FormationConfig& f) {
  const double area = f.target_area.value_or(f.robots * f.spacing * f.spacing * std::sqrt(3.0) / 2.0);
  if (f.shape == "triangle") return TargetShape::triangle(area);
  if (f.shape == "k") return TargetShape::letter_k(area);
  TargetShape poly(f.polygon);
  return f.target_area ? poly.scaled_to_area(area) : poly;
}

FormationOutcome run_formation_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const FormationState&, const FormationStepRecord&)>& on_step) {
  const auto& f = cfg.formation;
  const auto layout = formation_layout(f, cfg.seed);
  std::optional<double> r0 = cfg.scenario.r0;
  if (!r0 && cfg.scenario.r0_rule == R0Rule::RangeFloor)
    r0 = range_floor_r0(cfg.scenario.channel.max_range);
  auto initial = SwarmScenario::from_positions(layout, cfg.scenario.channel, r0);
  auto shape = formation_target(f);

  SensorModel sensors = cfg.sensor;
  sensors.rng_seed = cfg.seed;
  Localizer loc = cfg.variant == Variant::Optical ? Localizer::optical(cfg.optical, sensors)
                                                 : Localizer::matrix(cfg.vpe);
  FormationRunOptions opt;
  opt.steps = f.steps;
  opt.evaluate_every = f.evaluate_every;
  opt.snapshot_every = f.snapshot_every;
  opt.on_step = on_step;
  auto report = run_formation(initial, shape, f.params, loc, opt);

  FormationOutcome out{std::move(report), std::move(initial), std::move(shape)};
  if (!out.report.steps.empty()) {
    out.final_similarity = out.report.steps.back().similarity;
    double e = 0.0;
    for (const auto& s : out.report.steps) {
      out.max_similarity = std::max(out.max_similarity, s.similarity);
      e += s.mean_error;
    }
    out.mean_error = e / static_cast<double>(out.report.steps.size());
  }
  return out;
}

std::vector<ChainCheckRow> run_chain_checks(const OracleCheckConfig& o) {
  std::vector<ChainCheckRow> rows;
  for (int l : o.chain_lengths) {
    const auto chain = ChainSpec::from_speed(l, o.k1, o.k);
    ChainCheckRow row;
    row.l = l;
    row.epsilon1 = chain.epsilon1;
    row.epsilon2 = chain.epsilon2;
    row.delta0 = o.delta0;
    row.n_max_predicted = predict_nmax(chain, o.delta0);
    row.lower_bound = l / 2.0 - 1.0;
    const auto run = run_chain(chain, o.delta0);
    row.n_empirical = run.n_empirical;
    row.halves_identical = run.halves_identical;

    const auto t = chain_transition_matrix(chain);
    const auto pairs = chain_eigensystem(chain);
    row.lambda2 = pairs.size() > 1 ? std::abs(pairs[1].lambda) : 0.0;
    double worst = 0.0;
    for (const auto& p : pairs) {
      const Eigen::VectorXd r = t.t * p.vector - p.lambda * p.vector;
      worst = std::max(worst, r.cwiseAbs().maxCoeff() / p.vector.cwiseAbs().maxCoeff());
    }
    row.eigen_residual = worst;
    row.unsimplified_bound =
        detail::chain_unsimplified_bound(chain, Eigen::VectorXd::Ones(l), o.delta0);
    rows.push_back(row);
  }
  return rows;
}

std::vector<OracleCheckRow> run_oracle_equivalence(const ExperimentConfig& cfg) {
  const auto& o = cfg.oracle;
  struct Job {
    ScenarioKind kind;
    double size;
    int seed_index;
  };
  std::vector<Job> jobs;
  for (auto k : o.kinds)
    for (double s : o.size_factors)
      for (int i = 0; i < o.seeds; ++i) jobs.push_back({k, s, i});
  std::vector<OracleCheckRow> rows(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    ExperimentConfig c = cfg;
    c.variant = Variant::Matrix;
    c.scenario.kind = job.kind;
    c.scenario.size_factor = job.size;
    c.scenario.file.clear();
    c.stop.kind = StopCriterion::Kind::Oracle;
    c.trace_every = 0;
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(job.seed_index);
    const auto sc = build_scenario(c, seed);
    const AxisSet axes = axes_for(c, job.kind);
    const auto eq = equilibrium(sc, c.vpe, axes);
    const auto rep = localize_scenario(c, sc, seed);
    OracleCheckRow row;
    row.kind = job.kind;
    row.size_factor = job.size;
    row.seed = seed;
    row.robots = sc.size();
    row.iterations = rep.converged_at;
    auto dchi = [&](const RunReport& r) {
      double d = (r.chi_x - eq.x).cwiseAbs().maxCoeff();
      if (axes == AxisSet::XY) d = std::max(d, (r.chi_y - eq.y).cwiseAbs().maxCoeff());
      return d;
    };
    row.max_dchi = dchi(rep);
    c.stop.kind = StopCriterion::Kind::FixedIterations;
    c.stop.fixed_iterations = std::max<long>(1, 2 * rep.converged_at);
    const auto later = localize_scenario(c, sc, seed);
    row.max_dchi_later = dchi(later);
    row.wall_time_s = rep.wall_time_s + later.wall_time_s;
    rows[j] = row;
  });
  return rows;
}

// ---------------------------------------------------------------------------

CommandResult cmd_localize(const ExperimentConfig& cfg) {
  cfg.validate();
  Outputs out(cfg, "localize", cfg.out_dir);
  const auto sc = build_scenario(cfg, cfg.seed);
  const AxisSet axes = axes_for(cfg, cfg.scenario.kind);
  const bool two = axes == AxisSet::XY;
  const auto rep = localize_scenario(cfg, sc, cfg.seed, cfg.variant == Variant::Optical);

  ScenarioFile file;
  file.kind = cfg.scenario.file.empty() ? cfg.scenario.kind : ScenarioKind::Custom;
  file.size_factor = cfg.scenario.size_factor;
  file.spacing = cfg.scenario.spacing;
  file.channel = sc.channel();
  file.seed = cfg.seed;
  file.r0 = sc.r0();
  file.positions = sc.positions();
  std::ostringstream scen;
  write_scenario(scen, file);
  out.write("scenario.txt", scen.str());

  std::string run = "iteration,robot_id,chi_x,chi_y,error\n";
  auto emit = [&](long it, const Eigen::VectorXd& cx, const Eigen::VectorXd& cy) {
    const auto err = robot_errors(sc, cx, two ? &cy : nullptr);
    for (Eigen::Index i = 0; i < cx.size(); ++i)
      run += fmt::format("{},{},{},{},{}\n", it, i, g(cx[i]), two ? g(cy[i]) : "",
                         g(err[static_cast<std::size_t>(i)]));
  };
  for (const auto& snap : rep.chi_trace)
    if (snap.iteration != rep.iterations) emit(snap.iteration, snap.chi_x, snap.chi_y);
  emit(rep.iterations, rep.chi_x, rep.chi_y);
  out.write("run.csv", run);

  std::vector<ErrorSample> trace = rep.error_trace;
  if (trace.empty() || trace.back().iteration != rep.iterations)
    trace.push_back({rep.iterations, rep.mean_error, rep.max_error});
  std::string et = "iteration,mean_error,max_error\n";
  svg::Series sm{"mean error", {}, {}, {}, {}, false}, sx{"max error", {}, {}, {}, {}, false};
  for (const auto& e : trace) {
    et += fmt::format("{},{},{}\n", e.iteration, g(e.mean_error), g(e.max_error));
    sm.x.push_back(static_cast<double>(e.iteration));
    sm.y.push_back(e.mean_error);
    sx.x.push_back(static_cast<double>(e.iteration));
    sx.y.push_back(e.max_error);
  }
  out.write("error_trace.csv", et);
  out.svg_plot("error_trace.svg",
               {fmt::format("Localization error, {} robots", sc.size()), "iteration",
                "error (length units)", true, "", 720, 450},
               {sm, sx});

  if (!rep.sense_trace.empty()) {
    std::string st = "iteration,robot_id,s,c,xi_plus,xi_minus\n";
    for (const auto& r : rep.sense_trace)
      st += fmt::format("{},{},{},{},{},{}\n", r.iteration, r.robot, g(r.s), g(r.c), g(r.xi_plus),
                        g(r.xi_minus));
    out.write("sense_trace.csv", st);
  }

  // estimates drawn in the frame of the true positions
  {
    svg::Snapshot snap;
    snap.title = fmt::format("Estimated vs true positions ({} robots)", sc.size());
    snap.poses = sc.positions();
    const auto tx = axis_coordinates(sc, sc.x_axis());
    const double ox = tx.mean() - rep.chi_x.mean();
    double oy = 0.0;
    if (two) oy = axis_coordinates(sc, sc.y_axis()).mean() - rep.chi_y.mean();
    for (Eigen::Index i = 0; i < rep.chi_x.size(); ++i) {
      const double ex = rep.chi_x[i] + ox;
      const double ey = two ? rep.chi_y[i] + oy : dot(sc.position(static_cast<int>(i)), sc.y_axis());
      snap.estimates.push_back(sc.x_axis() * ex + sc.y_axis() * ey);
    }
    out.svg_snapshot("positions.svg", snap);
  }

  json results = {{"robots", sc.size()},
                  {"r0", sc.r0()},
                  {"converged", rep.converged},
                  {"converged_at", rep.converged_at},
                  {"iterations", rep.iterations},
                  {"mean_error", rep.mean_error},
                  {"max_error", rep.max_error}};
  CommandResult res;
  res.exit_code = rep.converged ? 0 : 3;
  res.lines = {fmt::format("robots: {}", sc.size()),
               fmt::format("r0: {}", g(sc.r0())),
               fmt::format("converged: {}", rep.converged ? "yes" : "no"),
               fmt::format("converged_at: {}", rep.converged_at),
               fmt::format("mean_error: {}", g(rep.mean_error)),
               fmt::format("max_error: {}", g(rep.max_error))};
  auto summary = res.lines;
  summary.push_back(fmt::format("wall_time_s: {:.3f}", rep.wall_time_s));
  out.finish(results, summary);
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  if (cfg.long_run &&
      std::find(cfg.sweep.size_factors.begin(), cfg.sweep.size_factors.end(), 100.0) ==
          cfg.sweep.size_factors.end())
    cfg.sweep.size_factors.push_back(100.0);
  cfg.validate();
  Outputs out(cfg, "sweep", cfg.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_sweep(cfg, !cfg.sweep.equilibrium_only);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string rows =
      "max_range,size_factor,seed,robots,r0,converged,iterations,mean_error,max_error,"
      "eq_mean_error,eq_max_error\n";
  for (const auto& r : res.rows)
    rows += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", g(r.max_range), g(r.size_factor),
                        r.seed, r.robots, g(r.r0), r.converged ? 1 : 0, r.iterations,
                        g(r.mean_error), g(r.max_error), g(r.eq_mean_error), g(r.eq_max_error));
  out.write("sweep.csv", rows);

  std::string pts =
      "max_range,size_factor,runs,iterations_mean,iterations_sd,mean_error_mean,mean_error_sd,"
      "eq_error_mean,eq_error_sd,r0_mean\n";
  for (const auto& p : res.points)
    pts += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", g(p.max_range), g(p.size_factor), p.runs,
                       g(p.iterations_mean), g(p.iterations_sd), g(p.mean_error_mean),
                       g(p.mean_error_sd), g(p.eq_error_mean), g(p.eq_error_sd), g(p.r0_mean));
  out.write("sweep_summary.csv", pts);

  std::string fit = "max_range,points,slope,intercept,r_squared,degenerate\n";
  json fits = json::array();
  CommandResult cr;
  for (const auto& [range, f] : res.fits) {
    if (cfg.sweep.equilibrium_only) break;
    fit += fmt::format("{},{},{},{},{},{}\n", g(range), f.points, g(f.slope), g(f.intercept),
                       g(f.r_squared), f.degenerate ? 1 : 0);
    fits.push_back({{"max_range", range},
                    {"slope", f.slope},
                    {"intercept", f.intercept},
                    {"r_squared", f.r_squared},
                    {"degenerate", f.degenerate}});
    cr.lines.push_back(
        f.degenerate
            ? fmt::format("range {}: fit degenerate ({} size factor)", g(range), f.points)
            : fmt::format("range {}: iterations ~ {} * size_factor + {} (R^2 = {:.4f})", g(range),
                          g(f.slope), g(f.intercept), f.r_squared));
  }
  if (!cfg.sweep.equilibrium_only) out.write("fit.csv", fit);

  std::vector<svg::Series> it_series, err_series;
  for (const auto& [range, f] : res.fits) {
    svg::Series si{fmt::format("range {}", g(range)), {}, {}, {}, {}, true};
    svg::Series se = si;
    for (const auto& p : res.points) {
      if (p.max_range != range) continue;
      si.x.push_back(p.size_factor);
      si.y.push_back(p.iterations_mean);
      si.band_lo.push_back(p.iterations_mean - p.iterations_sd);
      si.band_hi.push_back(p.iterations_mean + p.iterations_sd);
      se.x.push_back(p.size_factor);
      se.y.push_back(p.mean_error_mean);
      se.band_lo.push_back(p.mean_error_mean - p.mean_error_sd);
      se.band_hi.push_back(p.mean_error_mean + p.mean_error_sd);
    }
    it_series.push_back(std::move(si));
    err_series.push_back(std::move(se));
  }
  if (!cfg.sweep.equilibrium_only)
    out.svg_plot("sweep_iterations.svg",
                 {"Iterations to converge", "size factor", "iterations", false, "", 720, 450},
                 it_series);
  out.svg_plot("sweep_error.svg",
               {"Mean localization error", "size factor", "mean error (length units)", false, "",
                720, 450},
               err_series);

  double worst = 0.0;
  for (const auto& p : res.points) worst = std::max(worst, p.mean_error_mean);
  cr.lines.push_back(fmt::format("jobs: {}", res.rows.size()));
  cr.lines.push_back(fmt::format("worst mean error over points: {}", g(worst)));
  auto summary = cr.lines;
  summary.push_back(fmt::format("wall_time_s: {:.3f}", wall));
  out.finish({{"jobs", res.rows.size()}, {"fits", fits}, {"worst_mean_error", worst}}, summary);
  return cr;
}

CommandResult cmd_calibration_study(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.variant != Variant::Optical)
    throw Error(ErrorCode::ConfigError, "calibrate-study needs variant \"optical\"");
  Outputs out(cfg, "calibrate-study", cfg.out_dir);
  const auto res = run_calibration_study(cfg);

  std::string csv = "iteration,centroid_off,centroid_on,drift_off,drift_on\n";
  svg::Series off{"calibration off", {}, {}, {}, {}, false};
  svg::Series on{fmt::format("calibration on ({})", to_string(cfg.calibration.mode)), {}, {}, {}, {}, false};
  for (std::size_t n = 0; n < res.centroid_off.size(); ++n) {
    csv += fmt::format("{},{},{},{},{}\n", n, g(res.centroid_off[n]), g(res.centroid_on[n]),
                       g(res.drift_off[n]), g(res.drift_on[n]));
    off.x.push_back(static_cast<double>(n));
    off.y.push_back(res.drift_off[n] / res.r0);
    on.x.push_back(static_cast<double>(n));
    on.y.push_back(res.drift_on[n] / res.r0);
  }
  out.write("calibration.csv", csv);
  out.svg_plot("calibration.svg",
               {"Centroid drift with and without calibration", "iteration",
                "drift since settle (units of r0)", false, "", 720, 450},
               {off, on});

  CommandResult cr;
  cr.lines = {fmt::format("r0: {}", g(res.r0)),
              fmt::format("max drift, calibrated: {} r0 (bound {})", g(res.max_drift_on / res.r0),
                          g(cfg.calibration.drift_bound)),
              fmt::format("max drift, uncalibrated: {} r0 (floor {})", g(res.max_drift_off / res.r0),
                          g(cfg.calibration.uncalibrated_floor)),
              fmt::format("bounded: {}", res.bounded ? "yes" : "no"),
              fmt::format("uncalibrated diverged: {}", res.diverged ? "yes" : "no")};
  out.finish({{"r0", res.r0},
              {"max_drift_on", res.max_drift_on},
              {"max_drift_off", res.max_drift_off},
              {"bounded", res.bounded},
              {"diverged", res.diverged}},
             cr.lines);
  return cr;
}

CommandResult cmd_formation(const ExperimentConfig& cfg) {
  cfg.validate();
  Outputs out(cfg, "formation", cfg.out_dir);
  std::string traj = "step,robot_id,x,y,chi_x,chi_y,similarity\n";
  auto on_step = [&](const FormationState& s, const FormationStepRecord& rec) {
    for (std::size_t i = 0; i < s.poses.size(); ++i)
      traj += fmt::format("{},{},{},{},{},{},{}\n", s.step_index, i, format_real(s.poses[i].x),
                          format_real(s.poses[i].y), g(s.chi[i].x), g(s.chi[i].y),
                          g(rec.similarity));
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto fo = run_formation_experiment(cfg, on_step);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.write("trajectory.csv", traj);

  std::string sim = "step,similarity,mean_error\n";
  svg::Series ss{"similarity", {}, {}, {}, {}, false};
  for (const auto& r : fo.report.steps) {
    sim += fmt::format("{},{},{}\n", r.step, g(r.similarity), g(r.mean_error));
    ss.x.push_back(static_cast<double>(r.step));
    ss.y.push_back(r.similarity);
  }
  out.write("similarity.csv", sim);
  out.svg_plot("similarity.svg",
               {fmt::format("Similarity to the {} target", cfg.formation.shape), "step", "similarity",
                false, "", 720, 450},
               {ss});
  for (const auto& s : fo.report.snapshots) {
    svg::Snapshot snap;
    snap.title = fmt::format("Step {}", s.step_index);
    snap.poses = poses_in_estimate_frame(s.poses, s.chi);
    snap.estimates = s.chi;
    snap.outline = fo.shape.polygon();
    out.svg_snapshot(fmt::format("snapshot_{:05d}.svg", s.step_index), snap);
  }

  CommandResult cr;
  cr.lines = {fmt::format("robots: {}", fo.initial.size()),
              fmt::format("steps run: {}", fo.report.final_state.step_index),
              fmt::format("final similarity: {}", g(fo.final_similarity)),
              fmt::format("max similarity: {}", g(fo.max_similarity)),
              fmt::format("mean localization error: {}", g(fo.mean_error)),
              fmt::format("fragmented: {}", fo.report.fragmented ? "yes" : "no")};
  json results = {{"robots", fo.initial.size()},
                  {"steps", fo.report.final_state.step_index},
                  {"final_similarity", fo.final_similarity},
                  {"max_similarity", fo.max_similarity},
                  {"mean_error", fo.mean_error},
                  {"fragmented", fo.report.fragmented}};
  if (fo.report.fragmented) {
    cr.exit_code = 4;
    cr.lines.push_back("failure: " + fo.report.failure);
    results["failure"] = fo.report.failure;
    svg::write_file(out.dir() / "error.json",
                    json{{"error", "SwarmFragmented"},
                         {"category", "fragmentation"},
                         {"message", fo.report.failure},
                         {"last_good_step", fo.report.final_state.step_index}}
                            .dump(2) + "\n");
  }
  auto summary = cr.lines;
  summary.push_back(fmt::format("wall_time_s: {:.3f}", wall));
  out.finish(results, summary);
  return cr;
}

CommandResult cmd_oracle_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Outputs out(cfg, "oracle-check", cfg.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto chains = run_chain_checks(cfg.oracle);

  std::string cs = "l,epsilon1,epsilon2,delta0,n_max_predicted,n_empirical,lambda2\n";
  std::string oc =
      "l,lower_bound,n_empirical,n_max_predicted,unsimplified_bound,eigen_residual,"
      "halves_identical,within_printed_bound,within_unsimplified_bound\n";
  svg::Series se{"empirical", {}, {}, {}, {}, true}, sp{"predicted (printed)", {}, {}, {}, {}, true},
      su{"unsimplified bound", {}, {}, {}, {}, true}, sl{"l/2 - 1", {}, {}, {}, {}, false};
  CommandResult cr;
  int printed_ok = 0;
  for (const auto& r : chains) {
    const double n = static_cast<double>(r.n_empirical);
    const bool in_printed = n >= r.lower_bound && n <= r.n_max_predicted;
    const bool in_unsimplified = n >= r.lower_bound && n <= r.unsimplified_bound;
    printed_ok += in_printed;
    cs += fmt::format("{},{},{},{},{},{},{}\n", r.l, g(r.epsilon1), g(r.epsilon2), g(r.delta0),
                      g(r.n_max_predicted), r.n_empirical, g(r.lambda2));
    oc += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.l, g(r.lower_bound), r.n_empirical,
                      g(r.n_max_predicted), g(r.unsimplified_bound), g(r.eigen_residual),
                      r.halves_identical ? 1 : 0, in_printed ? 1 : 0, in_unsimplified ? 1 : 0);
    for (auto* s : {&se, &sp, &su, &sl}) s->x.push_back(r.l);
    se.y.push_back(n);
    sp.y.push_back(r.n_max_predicted);
    su.y.push_back(r.unsimplified_bound);
    sl.y.push_back(r.lower_bound);
    cr.lines.push_back(fmt::format("chain l={}: n_empirical={} printed bound={} unsimplified={} {}",
                                   r.l, r.n_empirical, g(r.n_max_predicted),
                                   g(r.unsimplified_bound), in_printed ? "ok" : "OUTSIDE"));
  }
  out.write("chain_sweep.csv", cs);
  out.write("oracle_checks.csv", oc);
  out.svg_plot("chain_bound.svg",
               {"Iterations to reach delta0 on a chain", "chain length l", "iterations", true, "",
                720, 450},
               {se, sp, su, sl});

  const auto eq = run_oracle_equivalence(cfg);
  std::string ec = "kind,size_factor,seed,robots,iterations,max_dchi,max_dchi_later,pass\n";
  int passed = 0;
  double worst = 0.0;
  for (const auto& r : eq) {
    const bool pass = r.max_dchi < cfg.stop.tolerance && r.max_dchi_later < cfg.stop.tolerance;
    passed += pass;
    worst = std::max({worst, r.max_dchi, r.max_dchi_later});
    ec += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(r.kind), g(r.size_factor), r.seed,
                      r.robots, r.iterations, g(r.max_dchi), g(r.max_dchi_later), pass ? 1 : 0);
  }
  out.write("oracle_consistency.csv", ec);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cr.lines.push_back(fmt::format("chains within printed bound: {}/{}", printed_ok, chains.size()));
  cr.lines.push_back(fmt::format("oracle equivalence: {}/{} runs within {} (worst {})", passed,
                                 eq.size(), g(cfg.stop.tolerance), g(worst)));
  auto summary = cr.lines;
  summary.push_back(fmt::format("wall_time_s: {:.3f}", wall));
  out.finish({{"chains_within_printed_bound", printed_ok},
              {"chains", chains.size()},
              {"equivalence_passed", passed},
              {"equivalence_runs", eq.size()},
              {"worst_dchi", worst}},
             summary);
  return cr;
}

CommandResult cmd_long(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.scenario.kind = ScenarioKind::Square;
  cfg.scenario.size_factor = 100.0;
  cfg.scenario.file.clear();
  cfg.stop.kind = StopCriterion::Kind::Oracle;
  cfg.stop.max_iterations = 9000;
  if (cfg.trace_every == 0) cfg.trace_every = 100;
  cfg.out_dir = (fs::path(cfg_in.out_dir) / "long").string();
  try {
    auto r = cmd_localize(cfg);
    r.lines.insert(r.lines.begin(), "long run: square, size factor 100, budget 9000 iterations");
    return r;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MaxIterationsExceeded) throw;
    CommandResult r;
    r.exit_code = 3;
    r.lines = {"long run: no convergence within 9000 iterations", e.what()};
    return r;
  }
}

}  // namespace vpe
