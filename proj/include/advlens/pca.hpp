#pragma once

#include <string>
#include <vector>

#include "advlens/matrix.hpp"

namespace advlens {

struct PcaResult {
  Matrix projection;            // N x out_dims
  Matrix components;            // d x out_dims, unit columns
  Eigen::VectorXd eigenvalues;  // covariance eigenvalues, descending
  std::vector<std::string> warnings;
};

/// Projects mean-centred rows onto the leading principal axes. Each axis is
/// signed so its largest-magnitude loading is positive. Axes beyond the rank
/// of X come back as zero columns with a warning.
PcaResult pca_initialize(const Matrix& X, std::size_t out_dims = 2);

}  // namespace advlens
