#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "vpe/error.hpp"
#include "vpe/experiment_config.hpp"
#include "vpe/experiments.hpp"
#include "vpe/scenario_io.hpp"

using namespace vpe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vpe_test_" + name);
  fs::remove_all(p);
  return p;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a vpe::Error";
  return ErrorCode::InvalidArgument;
}

const char* kLine = R"({
  "name": "t", "seed": 4, "axes": "x",
  // comments are fine
  "scenario": { "kind": "line", "size_factor": 6, "r0_rule": "range_floor",
                "channel": { "law": "unit-within-range", "max_range": 1.5 } },
  "stop": { "kind": "oracle", "tolerance": 0.1 }
})";

}  // namespace

TEST(Config, ParsesAndDefaults) {
  ExperimentConfig c = parse_config(kLine);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.scenario.kind, ScenarioKind::Line);
  EXPECT_EQ(c.scenario.channel.law, AttenuationLaw::UnitWithinRange);
  EXPECT_EQ(c.sensor.rng_seed, 4u);
  EXPECT_EQ(c.variant, Variant::Matrix);
  EXPECT_NO_THROW(c.validate());
  ExperimentConfig d = parse_config("{}");
  EXPECT_EQ(d.stop.tolerance, 0.1);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_EQ(code_of([] { parse_config(R"({"sede": 1})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config(R"({"scenario": {"kindd": "line"}})"); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config(R"({"vpe": {"k": "fast"}})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("{not json"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config(R"({"variant": "quantum"})"); }), ErrorCode::ConfigError);
}

TEST(Config, ValidateCatchesBadBlocks) {
  ExperimentConfig c = parse_config(R"({"vpe": {"k1": -0.5}})");
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::ConfigError);
  ExperimentConfig d = parse_config(R"({"scenario": {"size_factor": 1}})");
  EXPECT_EQ(code_of([&] { d.validate(); }), ErrorCode::ConfigError);
  ExperimentConfig e = parse_config(R"({"sweep": {"seeds": 0}})");
  EXPECT_EQ(code_of([&] { e.validate(); }), ErrorCode::ConfigError);
}

TEST(Config, HashIgnoresOutputDirectory) {
  ExperimentConfig a = parse_config(kLine);
  ExperimentConfig b = a;
  b.out_dir = "elsewhere";
  b.threads = 3;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 5;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
  EXPECT_EQ(parse_config(a.canonical_json()).hash(), a.hash());
}

TEST(Config, EnumsRoundTrip) {
  for (auto v : {Variant::Matrix, Variant::Optical}) EXPECT_EQ(parse_variant(to_string(v)), v);
  for (auto r : {R0Rule::Weighted, R0Rule::RangeFloor, R0Rule::Optimized})
    EXPECT_EQ(parse_r0_rule(to_string(r)), r);
}

TEST(ScenarioIo, RoundTripIsBitExact) {
  ChannelModel ch{AttenuationLaw::InverseSquare, 2.5, 1.0};
  ScenarioFile f = make_scenario_file(ScenarioKind::Annulus, 6, 1.0, 11, ch, 1.234567890123);
  std::stringstream ss;
  write_scenario(ss, f);
  ScenarioFile g = read_scenario(ss);
  ASSERT_EQ(f.positions.size(), g.positions.size());
  for (std::size_t i = 0; i < f.positions.size(); ++i) {
    EXPECT_EQ(f.positions[i].x, g.positions[i].x);
    EXPECT_EQ(f.positions[i].y, g.positions[i].y);
  }
  EXPECT_EQ(g.kind, ScenarioKind::Annulus);
  EXPECT_EQ(g.seed, 11u);
  EXPECT_EQ(g.channel.law, AttenuationLaw::InverseSquare);
  EXPECT_EQ(g.channel.max_range, 2.5);
  ASSERT_TRUE(g.r0);
  EXPECT_EQ(*g.r0, 1.234567890123);

  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 0.0})
    EXPECT_EQ(parse_real(format_real(v)), v);
}

TEST(ScenarioIo, FileOnDisk) {
  fs::path dir = scratch("io");
  fs::create_directories(dir);
  ScenarioFile f = make_scenario_file(ScenarioKind::Square, 4, 1.0, 2, {});
  f.polygon = {{0, 0}, {1, 0}, {0, 1}};
  save_scenario(dir / "s.txt", f);
  ScenarioFile g = load_scenario(dir / "s.txt");
  EXPECT_EQ(g.positions.size(), 16u);
  EXPECT_EQ(g.polygon.size(), 3u);
  EXPECT_EQ(code_of([&] { load_scenario(dir / "missing.txt"); }), ErrorCode::ConfigError);
  std::istringstream bad("kind = square\nbogus line\n");
  EXPECT_THROW(read_scenario(bad), Error);
}

TEST(Fit, LineAndDegenerate) {
  LinearFit f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_FALSE(f.degenerate);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  LinearFit g = fit_line({5, 5}, {1, 2});
  EXPECT_TRUE(g.degenerate);
  EXPECT_TRUE(fit_line({5}, {1}).degenerate);
}

TEST(Experiments, RangeFloorRule) {
  EXPECT_DOUBLE_EQ(range_floor_r0(1.5), 1.0);
  EXPECT_DOUBLE_EQ(range_floor_r0(2.5), 1.5);
  EXPECT_DOUBLE_EQ(range_floor_r0(3.5), 2.0);
}

TEST(Experiments, ScenarioR0Precedence) {
  ExperimentConfig c = parse_config(kLine);
  EXPECT_DOUBLE_EQ(build_scenario(c, 1).r0(), 1.0);
  c.scenario.r0 = 0.8;
  EXPECT_DOUBLE_EQ(build_scenario(c, 1).r0(), 0.8);
  c.scenario.kind = ScenarioKind::Custom;
  EXPECT_EQ(code_of([&] { build_scenario(c, 1); }), ErrorCode::ConfigError);
}

TEST(Experiments, OptimizedR0BeatsNeighbours) {
  auto sc = generate_scenario(ScenarioKind::Square, 6, 1.0, 1);
  VpeParams p;
  R0Fit fit = optimize_r0(sc, p, AxisSet::XY, 0.1, 10.0);
  auto err = [&](double r0) { return equilibrium(sc.with_r0(r0), p, AxisSet::XY).error.mean_error; };
  EXPECT_NEAR(err(fit.r0), fit.mean_error, 1e-9);
  EXPECT_LE(fit.mean_error, err(fit.r0 * 1.05) + 1e-12);
  EXPECT_LE(fit.mean_error, err(fit.r0 * 0.95) + 1e-12);
}

TEST(Experiments, ParallelForRunsEveryIndexAndRethrows) {
  std::atomic<int> sum{0};
  parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  EXPECT_EQ(sum.load(), 4950);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7 || i == 3) throw std::runtime_error("job " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "job 3");
  }
}

TEST(Experiments, SweepSingleSizeIsDegenerate) {
  ExperimentConfig c = parse_config(kLine);
  c.sweep.size_factors = {6};
  c.sweep.max_ranges = {1.5};
  c.sweep.seeds = 2;
  SweepResult r = run_sweep(c);
  ASSERT_EQ(r.rows.size(), 2u);
  ASSERT_EQ(r.fits.size(), 1u);
  EXPECT_TRUE(r.fits[0].second.degenerate);
  EXPECT_TRUE(r.rows[0].converged);
}

TEST(Experiments, SweepIterationsDropWithRange) {
  ExperimentConfig c = parse_config(kLine);
  c.sweep.size_factors = {10, 20};
  c.sweep.max_ranges = {1.5, 3.5};
  c.sweep.seeds = 1;
  SweepResult r = run_sweep(c);
  ASSERT_EQ(r.points.size(), 4u);
  EXPECT_GT(r.points[0].iterations_mean, r.points[2].iterations_mean);
  EXPECT_GT(r.points[1].iterations_mean, r.points[3].iterations_mean);
}

TEST(Experiments, CalibrationTwinsMatchWithoutNoise) {
  ExperimentConfig c = parse_config(R"({
    "seed": 2, "variant": "optical",
    "scenario": { "kind": "line", "size_factor": 6, "r0_rule": "range_floor",
                  "channel": { "law": "unit-within-range", "max_range": 1.5 } },
    "optical": { "calibration": "distributed", "calibrate_every": 20, "dual": false },
    "calibration_study": { "iterations": 300, "settle": 100 }
  })");
  CalibrationStudyResult r = run_calibration_study(c);
  ASSERT_EQ(r.centroid_off.size(), r.centroid_on.size());
  ASSERT_FALSE(r.centroid_off.empty());
  for (std::size_t i = 0; i < r.centroid_off.size(); ++i)
    ASSERT_NEAR(r.centroid_off[i], r.centroid_on[i], 1e-3 * r.r0) << i;
}

TEST(Experiments, FormationLayoutIsCentredAndSeeded) {
  FormationConfig f;
  auto a = formation_layout(f, 1), b = formation_layout(f, 1), c = formation_layout(f, 2);
  ASSERT_EQ(a.size(), 52u);
  Vec2 mean{};
  for (auto p : a) mean += p;
  mean = mean / 52.0;
  EXPECT_NEAR(mean.x, 0.0, 0.05);
  EXPECT_NEAR(mean.y, 0.0, 0.05);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_FALSE(a[0] == c[0]);
}

TEST(Commands, LocalizeIsDeterministic) {
  ExperimentConfig c = parse_config(kLine);
  c.trace_every = 10;
  fs::path d1 = scratch("det1"), d2 = scratch("det2");
  c.out_dir = d1.string();
  CommandResult r1 = cmd_localize(c);
  c.out_dir = d2.string();
  CommandResult r2 = cmd_localize(c);
  EXPECT_EQ(r1.exit_code, 0);
  EXPECT_EQ(r2.exit_code, 0);
  for (const char* f : {"run.csv", "error_trace.csv", "scenario.txt", "error_trace.svg", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  const std::string run = slurp(d1 / "run.csv");
  EXPECT_EQ(run.substr(0, run.find('\n')), "iteration,robot_id,chi_x,chi_y,error");
  EXPECT_NE(slurp(d1 / "manifest.json").find(c.hash_hex()), std::string::npos);
  EXPECT_NE(slurp(d1 / "error_trace.svg").find(c.hash_hex()), std::string::npos);

  ScenarioFile sf = load_scenario(d1 / "scenario.txt");
  SwarmScenario sc = build_scenario(c, c.seed);
  ASSERT_EQ(sf.positions.size(), sc.size());
  for (std::size_t i = 0; i < sc.size(); ++i) EXPECT_EQ(sf.positions[i], sc.positions()[i]);
}

TEST(Commands, CustomScenarioFromFile) {
  fs::path dir = scratch("custom");
  fs::create_directories(dir);
  ScenarioFile f = make_scenario_file(ScenarioKind::Square, 4, 1.0, 9, {});
  save_scenario(dir / "sq.txt", f);
  {
    std::ofstream cfg(dir / "c.json");
    cfg << R"({"scenario": {"kind": "custom", "file": "sq.txt"}, "out": ")" << (dir / "out").string()
        << "\"}";
  }
  ExperimentConfig c = load_config(dir / "c.json");
  SwarmScenario sc = build_scenario(c, 1);
  EXPECT_EQ(sc.size(), 16u);
  EXPECT_EQ(cmd_localize(c).exit_code, 0);
}

TEST(Commands, OracleCheckWritesChainCsv) {
  ExperimentConfig c = parse_config(R"({
    "oracle_check": { "chain_lengths": [4, 8], "kinds": ["line"], "size_factors": [4], "seeds": 1 }
  })");
  fs::path d = scratch("oracle");
  c.out_dir = d.string();
  cmd_oracle_check(c);
  const std::string csv = slurp(d / "chain_sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "l,epsilon1,epsilon2,delta0,n_max_predicted,n_empirical,lambda2");
  EXPECT_TRUE(fs::exists(d / "chain_bound.svg"));
}

TEST(Commands, FormationZeroSteps) {
  ExperimentConfig c = parse_config(R"({
    "scenario": { "kind": "custom", "r0": 0.35,
                  "channel": { "law": "inverse-square", "max_range": 0.5, "reference_distance": 0.2 } },
    "vpe": { "k1": 0.01 },
    "formation": { "steps": 0 }
  })");
  FormationOutcome o = run_formation_experiment(c);
  ASSERT_EQ(o.report.steps.size(), 1u);
  EXPECT_EQ(o.final_similarity, o.report.steps[0].similarity);
}
