#include "advlens/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "advlens/error.hpp"

namespace advlens {

ShowFilter parse_show_filter(std::string_view text) {
  if (text == "all") return ShowFilter::all;
  if (text == "non-overlapping" || text == "non_overlapping") return ShowFilter::non_overlapping;
  throw ConfigError("unknown show filter '" + std::string(text) + "' (expected all, non-overlapping)");
}

ColorBy parse_color_by(std::string_view text) {
  if (text == "role") return ColorBy::role;
  if (text == "label") return ColorBy::label;
  throw ConfigError("unknown colouring '" + std::string(text) + "' (expected role, label)");
}

ViewTransform ViewTransform::fit(const EmbeddingMap& map, const RenderOptions& o) {
  ViewTransform t;
  t.left = o.margin;
  t.right = o.width - o.margin - o.legend_width;
  t.top = o.margin;
  t.bottom = o.height - o.margin;
  if (!map.points.empty()) {
    t.x_min = t.x_max = map.points[0].x;
    t.y_min = t.y_max = map.points[0].y;
    for (const auto& p : map.points) {
      t.x_min = std::min(t.x_min, p.x);
      t.x_max = std::max(t.x_max, p.x);
      t.y_min = std::min(t.y_min, p.y);
      t.y_max = std::max(t.y_max, p.y);
    }
  }
  return t;
}

double ViewTransform::to_x(double x) const {
  if (x_max == x_min) return 0.5 * (left + right);
  return left + (x - x_min) / (x_max - x_min) * (right - left);
}

double ViewTransform::to_y(double y) const {
  if (y_max == y_min) return 0.5 * (top + bottom);
  return bottom - (y - y_min) / (y_max - y_min) * (bottom - top);
}

std::string color_for_role(PointRole role) {
  switch (role) {
    case PointRole::clean_paired: return "#2ca02c";
    case PointRole::perturbed: return "#d62728";
    case PointRole::clean_misclassified: return "#7f7f7f";
  }
  return "#000000";
}

std::string color_for_label(int label) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (label >= 0 && label < 10) return palette[label];
  // Golden-angle hues beyond the base palette.
  const double hue = std::fmod(static_cast<double>(label) * 137.508, 360.0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "hsl(%.1f,65%%,45%%)", hue);
  return buf;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_map(const EmbeddingMap& map, const RenderOptions& o, const std::vector<bool>& overlap) {
  const ViewTransform t = ViewTransform::fit(map, o);
  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(o.width) + "\" height=\"" + fmt(o.height) +
         "\" viewBox=\"0 0 " + fmt(o.width) + " " + fmt(o.height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt(o.width) + "\" height=\"" + fmt(o.height) + "\" fill=\"white\"/>\n";
  if (!o.title.empty()) {
    svg += "<text class=\"title\" x=\"" + fmt(o.margin) + "\" y=\"" + fmt(o.margin * 0.6) +
           "\" font-family=\"sans-serif\" font-size=\"14\">" + escape(o.title) + "</text>\n";
  }

  svg += "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + fmt(t.left) + "\" y1=\"" + fmt(t.bottom) + "\" x2=\"" + fmt(t.right) + "\" y2=\"" +
         fmt(t.bottom) + "\"/>\n";
  svg += "<line x1=\"" + fmt(t.left) + "\" y1=\"" + fmt(t.bottom) + "\" x2=\"" + fmt(t.left) + "\" y2=\"" +
         fmt(t.top) + "\"/>\n";
  svg += "</g>\n";
  svg += "<g class=\"axis-labels\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  svg += "<text x=\"" + fmt(t.left) + "\" y=\"" + fmt(t.bottom + 16) + "\">" + fmt(t.x_min) + "</text>\n";
  svg += "<text x=\"" + fmt(t.right) + "\" y=\"" + fmt(t.bottom + 16) + "\" text-anchor=\"end\">" + fmt(t.x_max) +
         "</text>\n";
  svg += "<text x=\"" + fmt(t.left - 6) + "\" y=\"" + fmt(t.bottom) + "\" text-anchor=\"end\">" + fmt(t.y_min) +
         "</text>\n";
  svg += "<text x=\"" + fmt(t.left - 6) + "\" y=\"" + fmt(t.top + 4) + "\" text-anchor=\"end\">" + fmt(t.y_max) +
         "</text>\n";
  svg += "</g>\n";

  auto visible = [&](const EmbeddingPoint& p) {
    if (o.show == ShowFilter::all) return true;
    if (!p.pair_index) return false;
    const std::size_t k = *p.pair_index;
    return k < overlap.size() && !overlap[k];
  };

  svg += "<g class=\"markers\">\n";
  for (const auto& p : map.points) {
    if (!visible(p)) continue;
    const std::string color = o.color_by == ColorBy::role ? color_for_role(p.role) : color_for_label(p.label);
    const bool hollow = o.color_by == ColorBy::label && p.role == PointRole::perturbed;
    svg += "<circle class=\"marker\" data-role=\"" + to_string(p.role) + "\" data-label=\"" +
           std::to_string(p.label) + "\" cx=\"" + fmt(t.to_x(p.x)) + "\" cy=\"" + fmt(t.to_y(p.y)) + "\" r=\"" +
           fmt(o.marker_radius) + "\" " +
           (hollow ? "fill=\"none\" stroke=\"" + color + "\"" : "fill=\"" + color + "\"") + " fill-opacity=\"0.8\"/>\n";
  }
  svg += "</g>\n";

  std::vector<std::pair<std::string, std::string>> entries;
  if (o.color_by == ColorBy::role) {
    entries.emplace_back("clean", color_for_role(PointRole::clean_paired));
    entries.emplace_back("perturbed", color_for_role(PointRole::perturbed));
    if (o.show == ShowFilter::all) {
      entries.emplace_back("clean (misclassified)", color_for_role(PointRole::clean_misclassified));
    }
  } else {
    std::set<int> labels;
    for (const auto& p : map.points) labels.insert(p.label);
    for (int l : labels) entries.emplace_back("class " + std::to_string(l), color_for_label(l));
  }
  const double lx = o.width - o.legend_width + 10.0;
  svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double ly = o.margin + 18.0 * static_cast<double>(i);
    svg += "<g class=\"legend-entry\"><rect x=\"" + fmt(lx) + "\" y=\"" + fmt(ly - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + entries[i].second + "\"/><text x=\"" + fmt(lx + 16) +
           "\" y=\"" + fmt(ly) + "\">" + escape(entries[i].first) + "</text></g>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace advlens
