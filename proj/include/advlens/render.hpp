#pragma once

#include <vector>
#include <string>
#include <string_view>

#include "advlens/embedding_map.hpp"

namespace advlens {

enum class ShowFilter { all, non_overlapping };
enum class ColorBy { role, label };

ShowFilter parse_show_filter(std::string_view text);  // "all", "non-overlapping"
ColorBy parse_color_by(std::string_view text);        // "role", "label"

struct RenderOptions {
  ShowFilter show = ShowFilter::all;
  ColorBy color_by = ColorBy::role;
  double width = 640.0;
  double height = 640.0;
  double margin = 48.0;
  double legend_width = 170.0;
  double marker_radius = 3.0;
  std::string title;
};

/// Affine data-to-viewport map over the bounding box of every map point:
/// plot area [margin, width - margin - legend_width] x [margin, height - margin],
/// y axis pointing up. A zero-extent axis maps to the middle of the area.
struct ViewTransform {
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  double left = 0, right = 1, top = 0, bottom = 1;

  static ViewTransform fit(const EmbeddingMap& map, const RenderOptions& options);
  double to_x(double x) const;
  double to_y(double y) const;
};

std::string color_for_role(PointRole role);
std::string color_for_label(int label);

/// Scatter plot of the map as a standalone SVG document. Role colouring draws
/// clean points green and perturbed points red. With non_overlapping, only
/// the pairs whose `per_pair_overlap` flag (indexed by pair index) is false
/// are drawn. Every marker is a <circle class="marker" ...>.
std::string render_map(const EmbeddingMap& map, const RenderOptions& options,
                       const std::vector<bool>& per_pair_overlap = {});

}  // namespace advlens
