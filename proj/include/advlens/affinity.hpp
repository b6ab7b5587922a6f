#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlens/matrix.hpp"

namespace advlens {

struct Affinities {
  Matrix P;            // symmetric joint affinities, sum 1, zero diagonal
  Matrix conditional;  // row i holds p_{j|i}
  std::vector<double> beta;                 // Gaussian precision per row
  std::vector<double> realized_perplexity;  // exp(entropy) per row
  bool jittered = false;
  std::vector<std::string> warnings;
};

/// Squared Euclidean distances computed from coordinate differences (no
/// norm-expansion cancellation, so tiny separations survive).
Matrix squared_distances(const Matrix& X);

/// For each row, the smallest index of a row exactly equal to it.
std::vector<Eigen::Index> duplicate_representatives(const Matrix& X);

/// Bisects each row's Gaussian precision until exp(H(p_{.|i})) is within
/// `tolerance` of `perplexity`, then symmetrises P = (C + C^T) / 2N.
/// Exactly duplicated rows are separated by seeded noise of relative size
/// 1e-12 (with a warning) for the bandwidth search; P is then averaged over
/// each block of duplicate groups, so identical rows get identical
/// affinities. Throws NumericError if a row has not converged
/// after 200 bisection steps, ConfigError if perplexity is not in (0, N-1].
Affinities calibrate_affinities(const Matrix& X, double perplexity, std::uint64_t seed = 0,
                                double tolerance = 1e-7);

}  // namespace advlens
