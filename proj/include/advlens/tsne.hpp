#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advlens/matrix.hpp"

namespace advlens {

struct TsneConfig {
  double perplexity = 50.0;
  std::size_t iterations = 1500;
  double theta = 0.5;  // Barnes-Hut opening angle; 0 = exact
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t early_exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch_iter = 250;
  std::size_t kl_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Exact O(N^2) gradient of KL(P || Q) with a Student-t (1 dof) kernel:
/// 4 sum_j (p_ij - q_ij) (1 + |y_i - y_j|^2)^-1 (y_i - y_j).
Matrix exact_gradient(const Matrix& Y, const Matrix& P);

/// Same gradient with repulsive forces from a quadtree: a cell is summarised
/// by its centre of mass when cell_size / distance < theta (and it does not
/// contain the point). theta = 0 visits every point.
Matrix bh_gradient(const Matrix& Y, const Matrix& P, double theta);

double kl_divergence(const Matrix& Y, const Matrix& P);

struct TsneResult {
  Matrix Y;                              // N x 2
  std::vector<double> kl_trace;          // KL(P || Q) every kl_every iterations
  std::vector<std::size_t> kl_iterations;
  double perplexity = 0.0;               // perplexity actually used
  std::vector<std::string> warnings;
};

/// Largest perplexity usable for N points (N >= 3 * perplexity + 1).
double max_perplexity(std::size_t n);

/// 2-D t-SNE. Without `init`, starts from the PCA projection rescaled so the
/// first coordinate has standard deviation 1e-4. Perplexity is reduced (with
/// a warning) when N is too small for the requested value.
TsneResult tsne_embed(const Matrix& X, const TsneConfig& config, const std::optional<Matrix>& init = std::nullopt);

}  // namespace advlens
