#include "advlens/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "advlens/error.hpp"
#include "random.hpp"

namespace advlens {

Matrix squared_distances(const Matrix& X) {
  const auto n = X.rows();
  Matrix D = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (X.row(i) - X.row(j)).squaredNorm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

namespace {

std::vector<Eigen::Index> representatives(const Matrix& D) {
  std::vector<Eigen::Index> rep(static_cast<std::size_t>(D.rows()));
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    rep[i] = i;
    for (Eigen::Index j = 0; j < i; ++j) {
      if (D(i, j) == 0.0) {
        rep[i] = rep[j];
        break;
      }
    }
  }
  return rep;
}

// Replaces each block P[G, H] (diagonal excluded) by its mean.
void average_duplicate_blocks(Matrix& P, const std::vector<Eigen::Index>& rep) {
  const auto n = P.rows();
  std::vector<Eigen::Index> group(rep.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) group[i] = rep[i] == i ? k++ : group[rep[i]];
  Matrix sum = Matrix::Zero(k, k), cnt = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      sum(group[i], group[j]) += P(i, j);
      cnt(group[i], group[j]) += 1.0;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto g = std::min(group[i], group[j]), h = std::max(group[i], group[j]);
      if (i != j) P(i, j) = sum(g, h) / cnt(g, h);  // one value per unordered block keeps P symmetric
    }
  }
}

struct RowFit {
  double beta = 1.0;
  double perplexity = 0.0;
  bool converged = false;
};

// Fills row i of `cond` with p_{j|i} at the precision that hits the target.
RowFit fit_row(const Matrix& D, Eigen::Index i, double target, double tol, Matrix& cond) {
  const auto n = D.rows();
  double dmin = std::numeric_limits<double>::infinity(), dsum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    dmin = std::min(dmin, D(i, j));
    dsum += D(i, j);
  }
  const double mean_shift = dsum / static_cast<double>(n - 1) - dmin;

  auto evaluate = [&](double beta) {
    double sum = 0.0, weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) {
        cond(i, j) = 0.0;
        continue;
      }
      const double s = D(i, j) - dmin;
      const double p = std::exp(-beta * s);
      cond(i, j) = p;
      sum += p;
      weighted += s * p;
    }
    cond.row(i) /= sum;
    return std::exp(std::log(sum) + beta * weighted / sum);
  };

  RowFit fit;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  fit.beta = mean_shift > 0.0 ? 1.0 / mean_shift : 1.0;
  for (int step = 0; step < 200; ++step) {
    fit.perplexity = evaluate(fit.beta);
    const double err = fit.perplexity - target;
    if (std::abs(err) <= tol) {
      fit.converged = true;
      return fit;
    }
    if (err > 0.0) {  // too flat: sharpen
      lo = fit.beta;
      fit.beta = std::isinf(hi) ? fit.beta * 2.0 : 0.5 * (lo + hi);
    } else {
      hi = fit.beta;
      fit.beta = lo == 0.0 ? fit.beta * 0.5 : 0.5 * (lo + hi);
    }
  }
  return fit;
}

}  // namespace

std::vector<Eigen::Index> duplicate_representatives(const Matrix& X) { return representatives(squared_distances(X)); }

Affinities calibrate_affinities(const Matrix& X, double perplexity, std::uint64_t seed, double tolerance) {
  const auto n = X.rows();
  if (n < 2) throw ConfigError("calibrate_affinities: need at least 2 points");
  if (!(perplexity > 0.0) || perplexity > static_cast<double>(n - 1)) {
    throw ConfigError("calibrate_affinities: perplexity " + std::to_string(perplexity) + " must lie in (0, " +
                      std::to_string(n - 1) + "]");
  }
  Affinities a;
  Matrix D = squared_distances(X);
  const auto rep = representatives(D);
  bool duplicated = false;
  for (Eigen::Index i = 0; i < n; ++i) duplicated = duplicated || rep[i] != i;
  if (duplicated) {
    const double scale = std::max(X.cwiseAbs().maxCoeff(), 0.0);
    const double magnitude = 1e-12 * (scale > 0.0 ? scale : 1.0);
    std::mt19937_64 rng(seed);
    Matrix jittered = X;
    for (Eigen::Index i = 0; i < jittered.size(); ++i) jittered.data()[i] += magnitude * rnd::normal(rng);
    D = squared_distances(jittered);
    a.jittered = true;
    a.warnings.push_back("calibrate_affinities: duplicate rows jittered by seeded noise of size " +
                         std::to_string(magnitude));
  }

  a.conditional = Matrix::Zero(n, n);
  a.beta.resize(n);
  a.realized_perplexity.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowFit fit = fit_row(D, i, perplexity, tolerance, a.conditional);
    if (!fit.converged) {
      throw NumericError("calibrate_affinities: bandwidth search for row " + std::to_string(i) +
                         " did not converge after 200 bisections (perplexity " + std::to_string(fit.perplexity) +
                         ")");
    }
    a.beta[i] = fit.beta;
    a.realized_perplexity[i] = fit.perplexity;
  }
  a.P = (a.conditional + a.conditional.transpose()) / (2.0 * static_cast<double>(n));
  if (duplicated) average_duplicate_blocks(a.P, rep);
  return a;
}

}  // namespace advlens
