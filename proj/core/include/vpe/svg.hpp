#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vpe/geometry.hpp"

namespace vpe::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band_lo;  // optional shaded band, same length as x
  std::vector<double> band_hi;
  bool markers = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::string provenance;  // written into the file metadata
  int width = 720;
  int height = 450;
};

std::string line_plot(const PlotSpec& spec, const std::vector<Series>& series);

struct Snapshot {
  std::string title;
  std::string provenance;
  std::vector<Vec2> poses;
  std::vector<Vec2> estimates;  // optional; drawn as arrows from each pose
  std::vector<Vec2> outline;    // optional target polygon
  int size = 560;
};

std::string snapshot(const Snapshot& s);

void write_file(const std::filesystem::path& path, const std::string& content);

/// "{:.6g}" without locale surprises.
std::string num(double v);
std::string escape(const std::string& text);

}  // namespace vpe::svg
