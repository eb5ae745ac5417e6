#include "vpe/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "vpe/error.hpp"

namespace vpe::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) {
      const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

// 1-2-5 tick spacing
std::vector<double> ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step)
    out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
  return out;
}

std::string header(int w, int h, const std::string& title, const std::string& provenance) {
  std::string s = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n",
      w, h);
  s += fmt::format("<title>{}</title>\n", escape(title));
  if (!provenance.empty()) s += fmt::format("<metadata>{}</metadata>\n", escape(provenance));
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", w, h);
  return s;
}

}  // namespace

std::string num(double v) {
  if (!std::isfinite(v)) return "0";
  return fmt::format("{:.6g}", v);
}

std::string escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_plot(const PlotSpec& spec, const std::vector<Series>& series) {
  const int w = spec.width, h = spec.height;
  const double left = 70, right = 160, top = 40, bottom = 55;
  const double pw = w - left - right, ph = h - top - bottom;

  auto ty = [&](double v) { return spec.log_y ? (v > 0.0 ? std::log10(v) : std::nan("")) : v; };
  Range xr, yr;
  for (const auto& s : series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(ty(v));
    for (double v : s.band_lo) yr.add(ty(v));
    for (double v : s.band_hi) yr.add(ty(v));
  }
  xr.settle();
  yr.settle();
  auto px = [&](double v) { return left + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double v) { return top + ph - (ty(v) - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string s = header(w, h, spec.title, spec.provenance);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                   num(left + pw / 2), escape(spec.title));
  s += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
      num(left), num(top), num(pw), num(ph));

  for (double t : ticks(xr.lo, xr.hi)) {
    const double x = px(t);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#ddd\"/>\n", num(x),
                     num(top), num(top + ph));
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(x),
                     num(top + ph + 16), num(t));
  }
  for (double t : ticks(yr.lo, yr.hi)) {
    const double y = top + ph - (t - yr.lo) / (yr.hi - yr.lo) * ph;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#ddd\"/>\n",
                     num(left), num(y), num(left + pw));
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(left - 6),
                     num(y + 4), spec.log_y ? num(std::pow(10.0, t)) : num(t));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(left + pw / 2),
                   num(h - 14), escape(spec.x_label));
  s += fmt::format(
      "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      num(top + ph / 2), escape(spec.y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    const auto n = std::min(se.x.size(), se.y.size());
    if (se.band_lo.size() == n && se.band_hi.size() == n && n > 0) {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) pts += num(px(se.x[i])) + "," + num(py(se.band_hi[i])) + " ";
      for (std::size_t i = n; i-- > 0;) pts += num(px(se.x[i])) + "," + num(py(se.band_lo[i])) + " ";
      s += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                       pts, color);
    }
    std::string pts;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = py(se.y[i]);
      if (!std::isfinite(y)) continue;
      pts += num(px(se.x[i])) + "," + num(y) + " ";
    }
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>\n",
                     pts, color);
    if (se.markers)
      for (std::size_t i = 0; i < n; ++i)
        if (std::isfinite(py(se.y[i])))
          s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.8\" fill=\"{}\"/>\n", num(px(se.x[i])),
                           num(py(se.y[i])), color);
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                     num(left + pw + 12), num(ly), num(left + pw + 34), color);
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(left + pw + 40), num(ly + 4),
                     escape(se.label));
  }
  s += "</svg>\n";
  return s;
}

std::string snapshot(const Snapshot& snap) {
  const int size = snap.size;
  const double margin = 30;
  Range xr, yr;
  for (const auto& p : snap.poses) xr.add(p.x), yr.add(p.y);
  for (const auto& p : snap.estimates) xr.add(p.x), yr.add(p.y);
  for (const auto& p : snap.outline) xr.add(p.x), yr.add(p.y);
  xr.settle();
  yr.settle();
  const double span = std::max(xr.hi - xr.lo, yr.hi - yr.lo) * 1.08;
  const double cx = 0.5 * (xr.lo + xr.hi), cy = 0.5 * (yr.lo + yr.hi);
  const double scale = (size - 2 * margin) / span;
  auto px = [&](double x) { return size / 2.0 + (x - cx) * scale; };
  auto py = [&](double y) { return size / 2.0 - (y - cy) * scale; };

  std::string s = header(size, size, snap.title, snap.provenance);
  s += "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" "
       "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#1f5fd6\"/></marker></defs>\n";
  s += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                   size / 2, escape(snap.title));
  if (!snap.outline.empty()) {
    std::string pts;
    for (const auto& v : snap.outline) pts += num(px(v.x)) + "," + num(py(v.y)) + " ";
    s += fmt::format("<polygon points=\"{}\" fill=\"#f6e8c8\" stroke=\"#a06a00\" stroke-width=\"1.5\"/>\n",
                     pts);
  }
  const bool arrows = snap.estimates.size() == snap.poses.size();
  for (std::size_t i = 0; i < snap.poses.size(); ++i) {
    const auto& p = snap.poses[i];
    s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#222\"/>\n", num(px(p.x)), num(py(p.y)));
    if (arrows) {
      const auto& e = snap.estimates[i];
      s += fmt::format(
          "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#1f5fd6\" stroke-width=\"1\" "
          "marker-end=\"url(#head)\"/>\n",
          num(px(p.x)), num(py(p.y)), num(px(e.x)), num(py(e.y)));
    }
  }
  s += "</svg>\n";
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) throw Error(ErrorCode::IoError, fmt::format("write failed for {}", path.string()));
}

}  // namespace vpe::svg
