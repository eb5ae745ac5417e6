#include "vpe/experiment_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "vpe/error.hpp"

namespace vpe {

using json = nlohmann::json;

std::string_view to_string(Variant v) noexcept {
  return v == Variant::Optical ? "optical" : "matrix";
}

Variant parse_variant(std::string_view text) {
  if (text == "matrix") return Variant::Matrix;
  if (text == "optical") return Variant::Optical;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown variant '{}'", text));
}

std::string_view to_string(R0Rule r) noexcept {
  switch (r) {
    case R0Rule::Weighted: return "weighted";
    case R0Rule::RangeFloor: return "range_floor";
    case R0Rule::Optimized: return "optimized";
  }
  return "weighted";
}

R0Rule parse_r0_rule(std::string_view text) {
  if (text == "weighted") return R0Rule::Weighted;
  if (text == "range_floor") return R0Rule::RangeFloor;
  if (text == "optimized") return R0Rule::Optimized;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown r0_rule '{}'", text));
}

namespace {

std::string_view stop_name(StopCriterion::Kind k) {
  switch (k) {
    case StopCriterion::Kind::Oracle: return "oracle";
    case StopCriterion::Kind::SlidingWindow: return "sliding";
    case StopCriterion::Kind::FixedIterations: return "fixed";
  }
  return "oracle";
}

StopCriterion::Kind parse_stop(std::string_view text) {
  if (text == "oracle") return StopCriterion::Kind::Oracle;
  if (text == "sliding") return StopCriterion::Kind::SlidingWindow;
  if (text == "fixed") return StopCriterion::Kind::FixedIterations;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown stop kind '{}'", text));
}

AxisSet parse_axes(std::string_view text) {
  if (text == "x") return AxisSet::X;
  if (text == "xy") return AxisSet::XY;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown axes '{}' (x or xy)", text));
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigError, fmt::format("config {}: {}", where, what));
}

// Reads keys out of one JSON object and complains about anything left over.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(where_, "expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void read(const char* key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) fail(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, std::optional<double>& out) {
    if (auto* v = find(key)) {
      if (v->is_null()) return out.reset();
      if (!v->is_number()) fail(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <class I>
    requires std::is_integral_v<I> && (!std::is_same_v<I, bool>)
  void read(const char* key, I& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) fail(path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<I>) {
        if (v->is_number_unsigned() || v->get<long long>() >= 0)
          out = v->get<I>();
        else
          fail(path(key), "expected a nonnegative integer");
      } else {
        out = v->get<I>();
      }
    }
  }
  void read(const char* key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) fail(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (auto* v = find(key)) {
      if (!v->is_string()) fail(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void read(const char* key, std::vector<T>& out) {
    if (auto* v = find(key)) {
      if (!v->is_array()) fail(path(key), "expected an array");
      out.clear();
      for (const auto& e : *v) {
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) fail(path(key), "expected integers");
        } else {
          if (!e.is_number()) fail(path(key), "expected numbers");
        }
        out.push_back(e.get<T>());
      }
    }
  }
  void read(const char* key, std::vector<Vec2>& out) {
    if (auto* v = find(key)) {
      if (!v->is_array()) fail(path(key), "expected an array of [x, y]");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
          fail(path(key), "expected an array of [x, y]");
        out.push_back({e[0].get<double>(), e[1].get<double>()});
      }
    }
  }
  // enum stored as a string
  template <class E, class Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    std::string text;
    if (find(key) == nullptr) return;
    read(key, text);
    try {
      out = parse(text);
    } catch (const Error& e) {
      fail(path(key), e.what());
    }
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(where_.empty() ? "top level" : where_,
                                       fmt::format("unknown key '{}'", it.key()));
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class Fn>
void section(Reader& parent, const char* key, Fn fn) {
  if (auto* v = parent.find(key)) {
    Reader r(*v, parent.path(key));
    fn(r);
    r.done();
  }
}

json polygon_json(const std::vector<Vec2>& poly) {
  json a = json::array();
  for (auto p : poly) a.push_back({p.x, p.y});
  return a;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["variant"] = to_string(c.variant);
  j["axes"] = c.axes == AxisSet::X ? "x" : "xy";
  j["trace_every"] = c.trace_every;
  j["threads"] = c.threads;
  j["out"] = c.out_dir;
  j["long"] = c.long_run;

  const auto& s = c.scenario;
  j["scenario"] = {{"kind", to_string(s.kind)},
                   {"size_factor", s.size_factor},
                   {"spacing", s.spacing},
                   {"r0", s.r0 ? json(*s.r0) : json(nullptr)},
                   {"r0_rule", to_string(s.r0_rule)},
                   {"file", s.file},
                   {"channel",
                    {{"law", to_string(s.channel.law)},
                     {"max_range", s.channel.max_range},
                     {"reference_distance", s.channel.reference_distance}}}};
  j["vpe"] = {{"k", c.vpe.k},
              {"k0", c.vpe.k0},
              {"k1", c.vpe.k1},
              {"transfer", to_string(c.vpe.variant)},
              {"normalize_every", c.vpe.normalize_every}};
  const auto& o = c.optical;
  j["optical"] = {{"k1", o.k1},
                  {"k2", o.k2},
                  {"k3", o.k3},
                  {"k4", o.k4},
                  {"k", o.k},
                  {"recalibrate_c_every_round", o.recalibrate_c_every_round},
                  {"calibration", to_string(o.calibration)},
                  {"calibrate_every", o.calibrate_every},
                  {"calibration_rounds", o.calibration_rounds},
                  {"dual", o.dual}};
  j["sensor"] = {{"noise_fraction", c.sensor.noise_fraction},
                 {"kind", to_string(c.sensor.kind)},
                 {"bias", c.sensor.bias},
                 {"skip_probability", c.sensor.skip_probability}};
  j["stop"] = {{"kind", stop_name(c.stop.kind)},
               {"tolerance", c.stop.tolerance},
               {"window", c.stop.window},
               {"window_fraction", c.stop.window_fraction},
               {"max_iterations", c.stop.max_iterations},
               {"fixed_iterations", c.stop.fixed_iterations}};
  j["sweep"] = {{"size_factors", c.sweep.size_factors},
                {"max_ranges", c.sweep.max_ranges},
                {"seeds", c.sweep.seeds},
                {"equilibrium_only", c.sweep.equilibrium_only}};
  j["calibration_study"] = {{"iterations", c.calibration.iterations},
                            {"settle", c.calibration.settle},
                            {"drift_bound", c.calibration.drift_bound},
                            {"uncalibrated_floor", c.calibration.uncalibrated_floor},
                            {"mode", to_string(c.calibration.mode)}};
  const auto& f = c.formation;
  j["formation"] = {{"c1", f.params.c1},
                    {"c2", f.params.c2},
                    {"i0", f.params.i0},
                    {"k_prime", f.params.k_prime},
                    {"c3", f.params.c3},
                    {"c4", f.params.c4},
                    {"step_cap", f.params.step_cap},
                    {"initial_loc_iters", f.params.initial_loc_iters},
                    {"reloc_iters", f.params.reloc_iters},
                    {"shape", f.shape},
                    {"polygon", polygon_json(f.polygon)},
                    {"target_area", f.target_area ? json(*f.target_area) : json(nullptr)},
                    {"steps", f.steps},
                    {"robots", f.robots},
                    {"columns", f.columns},
                    {"spacing", f.spacing},
                    {"jitter", f.jitter},
                    {"evaluate_every", f.evaluate_every},
                    {"snapshot_every", f.snapshot_every},
                    {"min_similarity", f.min_similarity}};
  json kinds = json::array();
  for (auto k : c.oracle.kinds) kinds.push_back(to_string(k));
  j["oracle_check"] = {{"chain_lengths", c.oracle.chain_lengths},
                       {"delta0", c.oracle.delta0},
                       {"k1", c.oracle.k1},
                       {"k", c.oracle.k},
                       {"kinds", kinds},
                       {"size_factors", c.oracle.size_factors},
                       {"seeds", c.oracle.seeds}};
  return j;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::canonical_json() const { return to_json(*this).dump(); }

// the output directory and thread count do not change results
std::uint64_t ExperimentConfig::hash() const {
  json j = to_json(*this);
  j.erase("out");
  j.erase("threads");
  return fnv1a64(j.dump());
}

std::string ExperimentConfig::hash_hex() const { return fmt::format("{:016x}", hash()); }

void ExperimentConfig::validate() const {
  auto block = [](const char* name, auto&& check) {
    try {
      check();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InvalidArgument) throw;
      throw Error(ErrorCode::ConfigError, fmt::format("{}: {}", name, e.what()));
    }
  };
  block("scenario.channel", [&] { scenario.channel.validate(); });
  if (scenario.file.empty() && scenario.kind != ScenarioKind::Custom && !(scenario.size_factor >= 2.0))
    throw Error(ErrorCode::ConfigError, "scenario.size_factor must be >= 2");
  if (!(scenario.spacing > 0.0)) throw Error(ErrorCode::ConfigError, "scenario.spacing must be > 0");
  if (scenario.r0 && !(*scenario.r0 > 0.0))
    throw Error(ErrorCode::ConfigError, "scenario.r0 must be > 0");
  block("vpe", [&] { vpe.validate(); });
  block("optical", [&] { optical.validate(); });
  block("sensor", [&] { sensor.validate(); });
  block("formation", [&] { formation.params.validate(); });
  if (!(stop.tolerance > 0.0)) throw Error(ErrorCode::ConfigError, "stop.tolerance must be > 0");
  if (stop.window < 1) throw Error(ErrorCode::ConfigError, "stop.window must be >= 1");
  if (stop.max_iterations < 1) throw Error(ErrorCode::ConfigError, "stop.max_iterations must be >= 1");
  if (stop.fixed_iterations < 0)
    throw Error(ErrorCode::ConfigError, "stop.fixed_iterations must be >= 0");
  if (trace_every < 0) throw Error(ErrorCode::ConfigError, "trace_every must be >= 0");
  if (threads < 0) throw Error(ErrorCode::ConfigError, "threads must be >= 0");
  for (double s : sweep.size_factors)
    if (!(s >= 2.0)) throw Error(ErrorCode::ConfigError, "sweep.size_factors must be >= 2");
  for (double r : sweep.max_ranges)
    if (!(r > 0.0)) throw Error(ErrorCode::ConfigError, "sweep.max_ranges must be > 0");
  if (sweep.seeds < 1) throw Error(ErrorCode::ConfigError, "sweep.seeds must be >= 1");
  if (calibration.iterations < 1 || calibration.settle < 0 ||
      calibration.settle >= calibration.iterations)
    throw Error(ErrorCode::ConfigError,
                "calibration_study needs 0 <= settle < iterations");
  if (formation.robots < 1 || formation.columns < 1)
    throw Error(ErrorCode::ConfigError, "formation.robots and columns must be >= 1");
  if (!(formation.spacing > 0.0)) throw Error(ErrorCode::ConfigError, "formation.spacing must be > 0");
  if (formation.steps < 0) throw Error(ErrorCode::ConfigError, "formation.steps must be >= 0");
  if (formation.shape != "triangle" && formation.shape != "k" && formation.shape != "polygon")
    throw Error(ErrorCode::ConfigError,
                fmt::format("formation.shape '{}' (triangle, k or polygon)", formation.shape));
  if (formation.shape == "polygon" && formation.polygon.size() < 3)
    throw Error(ErrorCode::ConfigError, "formation.polygon needs >= 3 vertices");
  if (formation.target_area && !(*formation.target_area > 0.0))
    throw Error(ErrorCode::ConfigError, "formation.target_area must be > 0");
  for (int l : oracle.chain_lengths)
    if (l < 2) throw Error(ErrorCode::ConfigError, "oracle_check.chain_lengths must be >= 2");
  if (oracle.seeds < 1) throw Error(ErrorCode::ConfigError, "oracle_check.seeds must be >= 1");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("config is not valid JSON: {}", e.what()));
  }

  ExperimentConfig c;
  Reader top(root, "");
  top.read("name", c.name);
  top.read("seed", c.seed);
  top.read_enum("variant", c.variant, parse_variant);
  top.read_enum("axes", c.axes, parse_axes);
  top.read("trace_every", c.trace_every);
  top.read("threads", c.threads);
  top.read("out", c.out_dir);
  top.read("long", c.long_run);

  section(top, "scenario", [&](Reader& r) {
    auto& s = c.scenario;
    r.read_enum("kind", s.kind, parse_scenario_kind);
    r.read("size_factor", s.size_factor);
    r.read("spacing", s.spacing);
    r.read("r0", s.r0);
    r.read_enum("r0_rule", s.r0_rule, parse_r0_rule);
    r.read("file", s.file);
    section(r, "channel", [&](Reader& ch) {
      ch.read_enum("law", s.channel.law, parse_attenuation_law);
      ch.read("max_range", s.channel.max_range);
      ch.read("reference_distance", s.channel.reference_distance);
    });
  });
  section(top, "vpe", [&](Reader& r) {
    r.read("k", c.vpe.k);
    r.read("k0", c.vpe.k0);
    r.read("k1", c.vpe.k1);
    r.read_enum("transfer", c.vpe.variant, parse_transfer_variant);
    r.read("normalize_every", c.vpe.normalize_every);
  });
  section(top, "optical", [&](Reader& r) {
    auto& o = c.optical;
    r.read("k1", o.k1);
    r.read("k2", o.k2);
    r.read("k3", o.k3);
    r.read("k4", o.k4);
    r.read("k", o.k);
    r.read("recalibrate_c_every_round", o.recalibrate_c_every_round);
    r.read_enum("calibration", o.calibration, parse_calibration_mode);
    r.read("calibrate_every", o.calibrate_every);
    r.read("calibration_rounds", o.calibration_rounds);
    r.read("dual", o.dual);
  });
  section(top, "sensor", [&](Reader& r) {
    r.read("noise_fraction", c.sensor.noise_fraction);
    r.read_enum("kind", c.sensor.kind, parse_noise_kind);
    r.read("bias", c.sensor.bias);
    r.read("skip_probability", c.sensor.skip_probability);
  });
  section(top, "stop", [&](Reader& r) {
    r.read_enum("kind", c.stop.kind, parse_stop);
    r.read("tolerance", c.stop.tolerance);
    r.read("window", c.stop.window);
    r.read("window_fraction", c.stop.window_fraction);
    r.read("max_iterations", c.stop.max_iterations);
    r.read("fixed_iterations", c.stop.fixed_iterations);
  });
  section(top, "sweep", [&](Reader& r) {
    r.read("size_factors", c.sweep.size_factors);
    r.read("max_ranges", c.sweep.max_ranges);
    r.read("seeds", c.sweep.seeds);
    r.read("equilibrium_only", c.sweep.equilibrium_only);
  });
  section(top, "calibration_study", [&](Reader& r) {
    r.read("iterations", c.calibration.iterations);
    r.read("settle", c.calibration.settle);
    r.read("drift_bound", c.calibration.drift_bound);
    r.read("uncalibrated_floor", c.calibration.uncalibrated_floor);
    r.read_enum("mode", c.calibration.mode, parse_calibration_mode);
  });
  section(top, "formation", [&](Reader& r) {
    auto& f = c.formation;
    r.read("c1", f.params.c1);
    r.read("c2", f.params.c2);
    r.read("i0", f.params.i0);
    r.read("k_prime", f.params.k_prime);
    r.read("c3", f.params.c3);
    r.read("c4", f.params.c4);
    r.read("step_cap", f.params.step_cap);
    r.read("initial_loc_iters", f.params.initial_loc_iters);
    r.read("reloc_iters", f.params.reloc_iters);
    r.read("shape", f.shape);
    r.read("polygon", f.polygon);
    r.read("target_area", f.target_area);
    r.read("steps", f.steps);
    r.read("robots", f.robots);
    r.read("columns", f.columns);
    r.read("spacing", f.spacing);
    r.read("jitter", f.jitter);
    r.read("evaluate_every", f.evaluate_every);
    r.read("snapshot_every", f.snapshot_every);
    r.read("min_similarity", f.min_similarity);
  });
  section(top, "oracle_check", [&](Reader& r) {
    auto& o = c.oracle;
    r.read("chain_lengths", o.chain_lengths);
    r.read("delta0", o.delta0);
    r.read("k1", o.k1);
    r.read("k", o.k);
    if (auto* v = r.find("kinds")) {
      if (!v->is_array()) fail(r.path("kinds"), "expected an array of strings");
      o.kinds.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(r.path("kinds"), "expected an array of strings");
        try {
          o.kinds.push_back(parse_scenario_kind(e.get<std::string>()));
        } catch (const Error& err) {
          fail(r.path("kinds"), err.what());
        }
      }
    }
    r.read("size_factors", o.size_factors);
    r.read("seeds", o.seeds);
  });
  top.done();

  c.sensor.rng_seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open config {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  ExperimentConfig c = parse_config(buf.str());
  // relative scenario files resolve against the config's directory
  if (!c.scenario.file.empty()) {
    std::filesystem::path f(c.scenario.file);
    if (f.is_relative()) c.scenario.file = (path.parent_path() / f).lexically_normal().string();
  }
  return c;
}

}  // namespace vpe
