#include "advlens/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "advlens/affinity.hpp"
#include "advlens/error.hpp"
#include "advlens/pca.hpp"
#include "random.hpp"

namespace advlens {

void TsneConfig::validate() const {
  if (!(perplexity > 0.0)) throw ConfigError("t-SNE perplexity must be positive");
  if (iterations == 0) throw ConfigError("t-SNE iterations must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("t-SNE theta must lie in [0,1]");
  if (!(learning_rate > 0.0)) throw ConfigError("t-SNE learning rate must be positive");
  if (!(early_exaggeration > 0.0)) throw ConfigError("t-SNE early exaggeration must be positive");
  if (kl_every == 0) throw ConfigError("t-SNE kl_every must be positive");
}

Matrix exact_gradient(const Matrix& Y, const Matrix& P) {
  const auto n = Y.rows();
  Matrix grad = Matrix::Zero(n, 2);
  if (n < 2) return grad;
  Matrix W(n, n);
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    W(i, i) = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = Y(i, 0) - Y(j, 0), dy = Y(i, 1) - Y(j, 1);
      W(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
      z += W(i, j);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double m = (P(i, j) - W(i, j) / z) * W(i, j);
      gx += m * (Y(i, 0) - Y(j, 0));
      gy += m * (Y(i, 1) - Y(j, 1));
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
  }
  return grad;
}

namespace {

class QuadTree {
 public:
  explicit QuadTree(const Matrix& Y) : Y_(Y) {
    const auto n = Y.rows();
    std::vector<Eigen::Index> all(n);
    for (Eigen::Index i = 0; i < n; ++i) all[i] = i;
    double x0 = Y.col(0).minCoeff(), x1 = Y.col(0).maxCoeff();
    double y0 = Y.col(1).minCoeff(), y1 = Y.col(1).maxCoeff();
    const double side = std::max({x1 - x0, y1 - y0, 1e-300});
    build(all, x0, y0, side * (1.0 + 1e-9), 0);
  }

  // Accumulates sum_j w_ij^2 (y_i - y_j) into rep and sum_j w_ij into z.
  void repulsion(Eigen::Index i, double theta, double& rx, double& ry, double& z) const {
    const double px = Y_(i, 0), py = Y_(i, 1);
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (node.leaf) {
        for (auto j : node.points) {
          if (j == i) continue;
          add(px - Y_(j, 0), py - Y_(j, 1), 1.0, rx, ry, z);
        }
        continue;
      }
      const double dx = px - node.com_x, dy = py - node.com_y;
      const double dist = std::sqrt(dx * dx + dy * dy);
      const bool inside = px >= node.x0 && px <= node.x0 + node.side && py >= node.y0 && py <= node.y0 + node.side;
      if (!inside && dist > 0.0 && node.side / dist < theta) {
        add(dx, dy, static_cast<double>(node.count), rx, ry, z);
        continue;
      }
      for (auto c : node.children) {
        if (c != 0) stack.push_back(c);
      }
    }
  }

 private:
  struct Node {
    double x0 = 0, y0 = 0, side = 0;
    double com_x = 0, com_y = 0;
    std::size_t count = 0;
    bool leaf = true;
    std::array<std::size_t, 4> children{};  // 0 = absent (root is never a child)
    std::vector<Eigen::Index> points;
  };

  static void add(double dx, double dy, double weight, double& rx, double& ry, double& z) {
    const double w = 1.0 / (1.0 + dx * dx + dy * dy);
    z += weight * w;
    rx += weight * w * w * dx;
    ry += weight * w * w * dy;
  }

  std::size_t build(std::vector<Eigen::Index>& pts, double x0, double y0, double side, int depth) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    {
      Node& node = nodes_[id];
      node.x0 = x0;
      node.y0 = y0;
      node.side = side;
      node.count = pts.size();
      for (auto p : pts) {
        node.com_x += Y_(p, 0);
        node.com_y += Y_(p, 1);
      }
      node.com_x /= static_cast<double>(pts.size());
      node.com_y /= static_cast<double>(pts.size());
    }
    bool identical = true;
    for (auto p : pts) identical = identical && Y_(p, 0) == Y_(pts[0], 0) && Y_(p, 1) == Y_(pts[0], 1);
    if (pts.size() <= 1 || identical || depth >= kMaxDepth) {
      nodes_[id].points = pts;
      return id;
    }
    const double half = side / 2.0;
    std::array<std::vector<Eigen::Index>, 4> quads;
    for (auto p : pts) {
      const int qx = Y_(p, 0) >= x0 + half;
      const int qy = Y_(p, 1) >= y0 + half;
      quads[qy * 2 + qx].push_back(p);
    }
    nodes_[id].leaf = false;
    for (int q = 0; q < 4; ++q) {
      if (quads[q].empty()) continue;
      const std::size_t child = build(quads[q], x0 + (q % 2) * half, y0 + (q / 2) * half, half, depth + 1);
      nodes_[id].children[q] = child;
    }
    return id;
  }

  static constexpr int kMaxDepth = 48;
  const Matrix& Y_;
  std::vector<Node> nodes_;
};

}  // namespace

Matrix bh_gradient(const Matrix& Y, const Matrix& P, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("bh_gradient: theta must lie in [0,1]");
  const auto n = Y.rows();
  Matrix grad = Matrix::Zero(n, 2);
  if (n < 2) return grad;
  QuadTree tree(Y);
  Matrix rep(n, 2);
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double rx = 0.0, ry = 0.0;
    tree.repulsion(i, theta, rx, ry, z);
    rep(i, 0) = rx;
    rep(i, 1) = ry;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double ax = 0.0, ay = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = P(i, j);
      if (p == 0.0 || j == i) continue;
      const double dx = Y(i, 0) - Y(j, 0), dy = Y(i, 1) - Y(j, 1);
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      ax += p * w * dx;
      ay += p * w * dy;
    }
    grad(i, 0) = 4.0 * (ax - rep(i, 0) / z);
    grad(i, 1) = 4.0 * (ay - rep(i, 1) / z);
  }
  return grad;
}

double kl_divergence(const Matrix& Y, const Matrix& P) {
  const auto n = Y.rows();
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = Y(i, 0) - Y(j, 0), dy = Y(i, 1) - Y(j, 1);
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = P(i, j);
      if (j == i || p <= 0.0) continue;
      const double dx = Y(i, 0) - Y(j, 0), dy = Y(i, 1) - Y(j, 1);
      const double q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
      kl += p * std::log(p / q);
    }
  }
  return kl;
}

double max_perplexity(std::size_t n) { return n < 4 ? 0.0 : std::floor(static_cast<double>(n - 1) / 3.0); }

TsneResult tsne_embed(const Matrix& X, const TsneConfig& config, const std::optional<Matrix>& init) {
  config.validate();
  const auto n = X.rows();
  TsneResult result;
  if (n < 4) throw ConfigError("tsne_embed: need at least 4 points, got " + std::to_string(n));
  result.perplexity = config.perplexity;
  if (static_cast<double>(n) < 3.0 * config.perplexity + 1.0) {
    result.perplexity = max_perplexity(static_cast<std::size_t>(n));
    result.warnings.push_back("tsne_embed: perplexity reduced from " + std::to_string(config.perplexity) + " to " +
                              std::to_string(result.perplexity) + " for " + std::to_string(n) + " points");
  }

  Affinities aff = calibrate_affinities(X, result.perplexity, config.seed);
  for (auto& w : aff.warnings) result.warnings.push_back(std::move(w));
  const Matrix& P = aff.P;

  Matrix Y;
  if (init) {
    if (init->rows() != n || init->cols() != 2) throw ConfigError("tsne_embed: init must be N x 2");
    Y = *init;
  } else {
    PcaResult pca = pca_initialize(X, 2);
    for (auto& w : pca.warnings) result.warnings.push_back(std::move(w));
    Y = pca.projection;
    const double mean0 = Y.col(0).mean();
    const double sd0 = std::sqrt((Y.col(0).array() - mean0).square().sum() / static_cast<double>(n));
    if (sd0 > 0.0) {
      Y *= 1e-4 / sd0;
      // Identical rows start bit-identical and, with identical affinities, stay so.
      const auto rep = duplicate_representatives(X);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (rep[i] != i) Y.row(i) = Y.row(rep[i]);
      }
    } else {
      std::mt19937_64 rng(config.seed);
      for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = 1e-4 * rnd::normal(rng);
      result.warnings.push_back("tsne_embed: PCA projection is constant; using seeded random initialisation");
    }
  }

  Matrix update = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix exaggerated = P * config.early_exaggeration;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const bool lying = it < config.early_exaggeration_iters;
    const Matrix grad = bh_gradient(Y, lying ? exaggerated : P, config.theta);
    if (!grad.allFinite()) throw NumericError("tsne_embed: non-finite gradient at iteration " + std::to_string(it));
    const double momentum = it < config.momentum_switch_iter ? config.initial_momentum : config.final_momentum;
    for (Eigen::Index k = 0; k < Y.size(); ++k) {
      double& g = gains.data()[k];
      const double gk = grad.data()[k];
      double& u = update.data()[k];
      g = ((gk > 0.0) != (u > 0.0)) ? g + 0.2 : g * 0.8;
      g = std::max(g, 0.01);
      u = momentum * u - config.learning_rate * g * gk;
      Y.data()[k] += u;
    }
    Y.rowwise() -= Y.colwise().mean();
    if (it + 1 == config.early_exaggeration_iters) exaggerated.resize(0, 0);
    if ((it + 1) % config.kl_every == 0 || it + 1 == config.iterations) {
      result.kl_trace.push_back(kl_divergence(Y, P));
      result.kl_iterations.push_back(it + 1);
    }
  }
  result.Y = std::move(Y);
  return result;
}

}  // namespace advlens
