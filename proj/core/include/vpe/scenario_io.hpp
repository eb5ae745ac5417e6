#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vpe/swarm_model.hpp"

namespace vpe {

/// On-disk scenario description. The header is `key = value`; robot
/// positions follow in a `[positions]` table and an optional target outline
/// in a `[polygon]` table. Reals are written with 17 significant digits so
/// reading a file back reproduces every position bit for bit.
struct ScenarioFile {
  ScenarioKind kind = ScenarioKind::Custom;
  double size_factor = 0.0;
  double spacing = 1.0;
  ChannelModel channel;
  std::uint64_t seed = 0;
  std::optional<double> r0;
  std::vector<Vec2> positions;
  std::vector<Vec2> polygon;

  SwarmScenario to_scenario() const;
};

ScenarioFile make_scenario_file(ScenarioKind kind, double size_factor, double spacing,
                                std::uint64_t seed, const ChannelModel& channel,
                                std::optional<double> r0 = std::nullopt);

void write_scenario(std::ostream& out, const ScenarioFile& file);
ScenarioFile read_scenario(std::istream& in);

void save_scenario(const std::filesystem::path& path, const ScenarioFile& file);
ScenarioFile load_scenario(const std::filesystem::path& path);

/// %.17g, enough for an exact round trip through parse_real.
std::string format_real(double v);
double parse_real(std::string_view text);

}  // namespace vpe
