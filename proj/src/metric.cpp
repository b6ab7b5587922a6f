#include "advlens/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "advlens/error.hpp"
#include "advlens/parallel.hpp"

namespace advlens {

double euclidean_distance(Point2 a, Point2 b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

void OverlapInputs::validate() const {
  if (clean.size() != labels.size() || perturbed.size() != labels.size()) {
    throw ConfigError("overlap inputs: clean, perturbed and label counts differ");
  }
  if (labels.empty()) throw ConfigError("overlap inputs: no clean/perturbed pairs");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw ConfigError("overlap inputs: the metric needs pairs from at least two classes");
  }
}

bool overlapping(std::size_t i, const OverlapInputs& in) {
  if (i >= in.size()) throw ConfigError("overlapping: pair index out of range");
  double m = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (in.labels[j] == in.labels[i]) continue;
    m = std::min(m, euclidean_distance(in.clean[i], in.clean[j]));
    found = true;
  }
  if (!found) throw ConfigError("overlapping: no clean point with a label other than " + std::to_string(in.labels[i]));
  return euclidean_distance(in.clean[i], in.perturbed[i]) < m;
}

std::vector<bool> overlap_flags(const OverlapInputs& in) {
  in.validate();
  const std::size_t n = in.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return in.clean[a].x < in.clean[b].x; });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<bool> flags(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 c = in.clean[i];
    double m = std::numeric_limits<double>::infinity();
    // Walk outward in x; once |dx| clears the best distance nothing further can
    // beat it. The slack covers sqrt rounding of the candidate distances.
    const auto beyond = [&](double dx) { return dx > m * (1.0 + 1e-12); };
    for (std::size_t r = rank[i] + 1; r < n; ++r) {
      const std::size_t j = order[r];
      if (beyond(in.clean[j].x - c.x)) break;
      if (in.labels[j] != in.labels[i]) m = std::min(m, euclidean_distance(c, in.clean[j]));
    }
    for (std::size_t r = rank[i]; r-- > 0;) {
      const std::size_t j = order[r];
      if (beyond(c.x - in.clean[j].x)) break;
      if (in.labels[j] != in.labels[i]) m = std::min(m, euclidean_distance(c, in.clean[j]));
    }
    if (std::isinf(m)) throw ConfigError("overlapping: no clean point with a label other than " + std::to_string(in.labels[i]));
    flags[i] = euclidean_distance(c, in.perturbed[i]) < m;
  }
  return flags;
}

double robustness_metric(const OverlapInputs& inputs) {
  const auto flags = overlap_flags(inputs);
  const auto hits = std::count(flags.begin(), flags.end(), true);
  return static_cast<double>(hits) / static_cast<double>(flags.size());
}

OverlapInputs overlap_inputs(const EmbeddingMap& map) {
  map.validate();
  struct Pair {
    Point2 clean, perturbed;
    int label = 0;
  };
  std::map<std::size_t, Pair> pairs;
  for (const auto& p : map.points) {
    if (!p.pair_index) continue;
    auto& slot = pairs[*p.pair_index];
    if (p.role == PointRole::clean_paired) {
      slot.clean = {p.x, p.y};
      slot.label = p.label;
    } else {
      slot.perturbed = {p.x, p.y};
    }
  }
  OverlapInputs in;
  for (const auto& [idx, pair] : pairs) {
    in.clean.push_back(pair.clean);
    in.perturbed.push_back(pair.perturbed);
    in.labels.push_back(pair.label);
  }
  return in;
}

namespace {

LayerAnalysis analyse_layer(const LayerRepresentations& rep, const std::vector<int>& pair_labels,
                            const std::vector<int>& mis_labels, const TsneConfig& config,
                            const MetricContext& ctx, const EmbedFn& embed) {
  LayerAnalysis out;
  auto& report = out.report;
  report.layer = rep.layer;
  report.seed = ctx.seed;
  report.norm = ctx.norm;
  report.epsilon = ctx.epsilon;
  report.loss = ctx.loss;
  const auto n = rep.clean.rows();
  const auto m = rep.misclassified.rows();
  report.n_pairs = static_cast<std::size_t>(n);
  try {
    if (rep.perturbed.rows() != n || static_cast<std::size_t>(n) != pair_labels.size() ||
        static_cast<std::size_t>(m) != mis_labels.size()) {
      throw ConfigError("layer '" + rep.layer + "': representation and label counts disagree");
    }
    const auto d = rep.clean.cols();
    if (rep.perturbed.cols() != d || (m > 0 && rep.misclassified.cols() != d)) {
      throw ConfigError("layer '" + rep.layer + "': representation widths disagree");
    }
    Matrix joint(2 * n + m, d);
    joint.topRows(n) = rep.clean;
    joint.middleRows(n, n) = rep.perturbed;
    if (m > 0) joint.bottomRows(m) = rep.misclassified;

    const TsneResult emb = embed ? embed(rep.layer, joint, config) : tsne_embed(joint, config);
    report.warnings = emb.warnings;

    for (Eigen::Index i = 0; i < n; ++i) {
      out.map.points.push_back({emb.Y(i, 0), emb.Y(i, 1), PointRole::clean_paired, pair_labels[i],
                                static_cast<std::size_t>(i)});
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      out.map.points.push_back({emb.Y(n + i, 0), emb.Y(n + i, 1), PointRole::perturbed, pair_labels[i],
                                static_cast<std::size_t>(i)});
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      out.map.points.push_back(
          {emb.Y(2 * n + i, 0), emb.Y(2 * n + i, 1), PointRole::clean_misclassified, mis_labels[i], std::nullopt});
    }
    const OverlapInputs inputs = overlap_inputs(out.map);
    report.per_pair_overlap = overlap_flags(inputs);
    const auto hits = std::count(report.per_pair_overlap.begin(), report.per_pair_overlap.end(), true);
    report.metric = static_cast<double>(hits) / static_cast<double>(n);
  } catch (const std::exception& e) {
    report.ok = false;
    report.error = e.what();
    report.metric = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace

std::vector<LayerAnalysis> per_layer_metrics(const std::vector<LayerRepresentations>& layers,
                                             const std::vector<int>& pair_labels,
                                             const std::vector<int>& misclassified_labels,
                                             const TsneConfig& config, const MetricContext& context,
                                             const EmbedFn& embed) {
  std::vector<LayerAnalysis> out(layers.size());
  parallel_for(layers.size(), [&](std::size_t k) {
    out[k] = analyse_layer(layers[k], pair_labels, misclassified_labels, config, context, embed);
  });
  return out;
}

}  // namespace advlens
