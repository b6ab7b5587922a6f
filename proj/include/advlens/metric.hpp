#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advlens/attack.hpp"
#include "advlens/embedding_map.hpp"
#include "advlens/matrix.hpp"
#include "advlens/tsne.hpp"

namespace advlens {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

double euclidean_distance(Point2 a, Point2 b);

/// Paired clean/perturbed map positions with the clean samples' true labels.
struct OverlapInputs {
  std::vector<Point2> clean;
  std::vector<Point2> perturbed;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  /// Sizes agree, n >= 1 and at least two labels occur.
  void validate() const;
};

/// Pair i overlaps when |C_i - A_i| is strictly below the distance from C_i to
/// the nearest clean point of another class. Only clean points enter the
/// minimum. Throws ConfigError if no clean point has a different label.
bool overlapping(std::size_t i, const OverlapInputs& inputs);

/// overlapping(i) for every pair, via a sweep over clean points sorted by x.
std::vector<bool> overlap_flags(const OverlapInputs& inputs);

/// Fraction of overlapping pairs, in [0,1].
double robustness_metric(const OverlapInputs& inputs);

/// Paired points of a map, ordered by pair index.
OverlapInputs overlap_inputs(const EmbeddingMap& map);

struct LayerRobustnessReport {
  std::string layer;
  double metric = 0.0;
  std::size_t n_pairs = 0;
  std::vector<bool> per_pair_overlap;
  std::uint64_t seed = 0;
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  LossKind loss = LossKind::ce;
  bool ok = true;          // false when the layer failed; `error` says why
  std::string error;
  std::vector<std::string> warnings;
};

/// Representations of one layer: rows of the clean-paired, perturbed and
/// clean-misclassified samples (paired rows share order).
struct LayerRepresentations {
  std::string layer;
  Matrix clean;
  Matrix perturbed;
  Matrix misclassified;
};

struct LayerAnalysis {
  LayerRobustnessReport report;
  EmbeddingMap map;
};

/// Embedding routine used per layer; lets callers add caching.
using EmbedFn = std::function<TsneResult(const std::string& layer, const Matrix& X, const TsneConfig& config)>;

struct MetricContext {
  std::uint64_t seed = 0;
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  LossKind loss = LossKind::ce;
};

/// For each layer (in the given order): one joint t-SNE of clean-paired,
/// perturbed and misclassified rows, then the overlap metric over the pairs.
/// A failing layer is reported with ok == false; the others still run.
std::vector<LayerAnalysis> per_layer_metrics(const std::vector<LayerRepresentations>& layers,
                                             const std::vector<int>& pair_labels,
                                             const std::vector<int>& misclassified_labels,
                                             const TsneConfig& config, const MetricContext& context,
                                             const EmbedFn& embed = {});

}  // namespace advlens
