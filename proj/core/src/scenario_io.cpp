#include "vpe/scenario_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    const auto b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != ',') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw Error(ErrorCode::ConfigError, fmt::format("expected an unsigned integer, got '{}'", text));
  return v;
}

}  // namespace

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

double parse_real(std::string_view text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw Error(ErrorCode::ConfigError, fmt::format("expected a real number, got '{}'", text));
  return v;
}

SwarmScenario ScenarioFile::to_scenario() const {
  return SwarmScenario::from_positions(positions, channel, r0);
}

ScenarioFile make_scenario_file(ScenarioKind kind, double size_factor, double spacing,
                                std::uint64_t seed, const ChannelModel& channel,
                                std::optional<double> r0) {
  ScenarioFile f;
  f.kind = kind;
  f.size_factor = size_factor;
  f.spacing = spacing;
  f.channel = channel;
  f.seed = seed;
  f.r0 = r0;
  f.positions = generate_positions(kind, size_factor, spacing, seed);
  return f;
}

void write_scenario(std::ostream& out, const ScenarioFile& f) {
  out << "# vpe scenario\n";
  out << "kind = " << to_string(f.kind) << '\n';
  out << "size_factor = " << format_real(f.size_factor) << '\n';
  out << "spacing = " << format_real(f.spacing) << '\n';
  out << "law = " << to_string(f.channel.law) << '\n';
  out << "max_range = " << format_real(f.channel.max_range) << '\n';
  out << "reference_distance = " << format_real(f.channel.reference_distance) << '\n';
  out << "seed = " << f.seed << '\n';
  if (f.r0) out << "r0 = " << format_real(*f.r0) << '\n';
  out << "\n[positions]\nid x y\n";
  for (std::size_t i = 0; i < f.positions.size(); ++i)
    out << i << ' ' << format_real(f.positions[i].x) << ' ' << format_real(f.positions[i].y)
        << '\n';
  if (!f.polygon.empty()) {
    out << "\n[polygon]\nx y\n";
    for (const auto& v : f.polygon) out << format_real(v.x) << ' ' << format_real(v.y) << '\n';
  }
}

ScenarioFile read_scenario(std::istream& in) {
  ScenarioFile f;
  enum class Section { Header, Positions, Polygon } section = Section::Header;
  bool table_header_pending = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ConfigError, fmt::format("scenario line {}: {}", lineno, what));
  };

  while (std::getline(in, line)) {
    ++lineno;
    auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    if (s.front() == '[') {
      if (s == "[positions]") section = Section::Positions;
      else if (s == "[polygon]") section = Section::Polygon;
      else fail(fmt::format("unknown section {}", s));
      table_header_pending = true;
      continue;
    }
    if (section == Section::Header) {
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) fail("expected key = value");
      const auto key = trim(s.substr(0, eq));
      const auto val = trim(s.substr(eq + 1));
      try {
        if (key == "kind") f.kind = parse_scenario_kind(val);
        else if (key == "size_factor") f.size_factor = parse_real(val);
        else if (key == "spacing") f.spacing = parse_real(val);
        else if (key == "law") f.channel.law = parse_attenuation_law(val);
        else if (key == "max_range") f.channel.max_range = parse_real(val);
        else if (key == "reference_distance") f.channel.reference_distance = parse_real(val);
        else if (key == "seed") f.seed = parse_u64(val);
        else if (key == "r0") f.r0 = parse_real(val);
        else fail(fmt::format("unknown key '{}'", key));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ConfigError) throw;
        fail(e.what());
      }
      continue;
    }
    const auto cols = split_ws(s);
    if (table_header_pending) {
      table_header_pending = false;
      // column captions are optional
      if (!cols.empty() && (cols[0] == "id" || cols[0] == "x")) continue;
    }
    try {
      if (section == Section::Positions) {
        if (cols.size() != 3) fail("position rows are: id x y");
        if (parse_u64(cols[0]) != f.positions.size()) fail("position ids must be 0..l-1 in order");
        f.positions.push_back({parse_real(cols[1]), parse_real(cols[2])});
      } else {
        if (cols.size() != 2) fail("polygon rows are: x y");
        f.polygon.push_back({parse_real(cols[0]), parse_real(cols[1])});
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ConfigError || std::string_view(e.what()).starts_with("scenario"))
        throw;
      fail(e.what());
    }
  }

  // a header-only file means "generate from the recorded recipe"
  if (f.positions.empty()) {
    if (f.kind == ScenarioKind::Custom) fail("custom scenario without a [positions] table");
    f.positions = generate_positions(f.kind, f.size_factor, f.spacing, f.seed);
  }
  return f;
}

void save_scenario(const std::filesystem::path& path, const ScenarioFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  write_scenario(out, file);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("write failed for {}", path.string()));
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, fmt::format("cannot open scenario {}", path.string()));
  return read_scenario(in);
}

}  // namespace vpe
