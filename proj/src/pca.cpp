#include "advlens/pca.hpp"

#include <algorithm>
#include <cmath>

#include "advlens/error.hpp"

namespace advlens {

PcaResult pca_initialize(const Matrix& X, std::size_t out_dims) {
  const auto n = X.rows();
  const auto d = X.cols();
  const auto k = static_cast<Eigen::Index>(out_dims);
  if (k == 0 || n < k || d < k) {
    throw ConfigError("pca_initialize: need at least " + std::to_string(out_dims) + " rows and columns, got " +
                      std::to_string(n) + "x" + std::to_string(d));
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Matrix centred = X.rowwise() - mean;

  PcaResult r;
  r.components = Matrix::Zero(d, k);
  r.eigenvalues = Eigen::VectorXd::Zero(k);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  // Eigen-decompose whichever of the covariance (d x d) or Gram (n x n)
  // matrix is smaller; both share the non-zero spectrum.
  Eigen::VectorXd values;
  Matrix vectors;
  const bool gram = n < d;
  {
    const Eigen::MatrixXd m = gram ? Eigen::MatrixXd(centred * centred.transpose())
                                   : Eigen::MatrixXd(centred.transpose() * centred);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) throw NumericError("pca_initialize: eigen-decomposition failed");
    values = solver.eigenvalues().reverse();
    vectors = solver.eigenvectors().rowwise().reverse();
  }
  const double top = values.size() ? std::max(values(0), 0.0) : 0.0;
  const double tol = top * 1e-12 * static_cast<double>(std::max(n, d));

  std::size_t missing = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double lambda = values(c);
    if (!(lambda > tol) || top == 0.0) {
      ++missing;
      continue;
    }
    Eigen::VectorXd axis = gram ? Eigen::VectorXd(centred.transpose() * vectors.col(c) / std::sqrt(lambda))
                                : Eigen::VectorXd(vectors.col(c));
    axis.normalize();
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    r.components.col(c) = axis;
    r.eigenvalues(c) = lambda / denom;
  }
  r.projection = centred * r.components;
  if (missing > 0) {
    r.warnings.push_back("pca_initialize: data rank below " + std::to_string(out_dims) + "; " +
                         std::to_string(missing) + " component(s) padded with zeros");
  }
  return r;
}

}  // namespace advlens
