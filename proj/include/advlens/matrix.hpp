#pragma once

#include <Eigen/Dense>

#include "advlens/tensor.hpp"

namespace advlens {

/// Row-major dense matrix; one row per sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Copies a [N, ...] tensor into an N x (prod of the rest) matrix.
inline Matrix to_matrix(const Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.batch());
  const auto cols = static_cast<Eigen::Index>(t.sample_size());
  return Eigen::Map<const Matrix>(t.values().data(), rows, cols);
}

}  // namespace advlens
