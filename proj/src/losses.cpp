#include "advlens/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "advlens/error.hpp"

namespace advlens {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::dlr: return "dlr";
    case LossKind::dlr_targeted: return "dlr-t";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "ce") return LossKind::ce;
  if (text == "dlr") return LossKind::dlr;
  if (text == "dlr-t" || text == "dlr_t" || text == "dlr-targeted") return LossKind::dlr_targeted;
  throw ConfigError("unknown loss kind '" + std::string(text) + "' (expected ce, dlr, dlr-t)");
}

int argmax(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

namespace {

void check_label(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(logits.size()) + " logits");
  }
}

// Indices of the four largest logits, descending; ties by lower index.
std::array<int, 4> top4(std::span<const double> z) {
  if (z.size() < 4) {
    throw ConfigError("unsupported configuration: DLR losses need at least 4 classes, got " +
                      std::to_string(z.size()));
  }
  std::vector<int> idx(z.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 4, idx.end(), [&](int a, int b) {
    return z[a] > z[b] || (z[a] == z[b] && a < b);
  });
  return {idx[0], idx[1], idx[2], idx[3]};
}

int best_other(std::span<const double> z, int label) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(z.size()); ++i) {
    if (i != label && (best < 0 || z[i] > z[best])) best = i;
  }
  return best;
}

double ce_impl(std::span<const double> z, int label, std::span<double> grad) {
  check_label(z, label);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double log_sum = std::log(sum) + zmax;
  if (!grad.empty()) {
    for (std::size_t i = 0; i < z.size(); ++i) grad[i] = std::exp(z[i] - log_sum);
    grad[label] -= 1.0;
  }
  return log_sum - z[label];
}

double dlr_impl(std::span<const double> z, int label, std::span<double> grad) {
  check_label(z, label);
  const auto top = top4(z);
  const double den = z[top[0]] - z[top[2]];
  if (!(den > 0.0)) throw NumericError("degenerate DLR denominator: top-1 logit equals top-3 logit");
  const int other = best_other(z, label);
  const double num = z[label] - z[other];
  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    grad[label] -= 1.0 / den;
    grad[other] += 1.0 / den;
    const double r = num / (den * den);
    grad[top[0]] += r;
    grad[top[2]] -= r;
  }
  return -num / den;
}

double dlr_targeted_impl(std::span<const double> z, int label, int target, std::span<double> grad) {
  check_label(z, label);
  check_label(z, target);
  if (target == label) throw ConfigError("targeted DLR: target equals true label");
  const auto top = top4(z);
  const double den = z[top[0]] - 0.5 * (z[top[2]] + z[top[3]]);
  if (!(den > 0.0)) throw NumericError("degenerate targeted DLR denominator");
  const double num = z[label] - z[target];
  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    grad[label] -= 1.0 / den;
    grad[target] += 1.0 / den;
    const double r = num / (den * den);
    grad[top[0]] += r;
    grad[top[2]] -= 0.5 * r;
    grad[top[3]] -= 0.5 * r;
  }
  return -num / den;
}

}  // namespace

double ce_loss(std::span<const double> logits, int label) { return ce_impl(logits, label, {}); }

double dlr_loss(std::span<const double> logits, int label) { return dlr_impl(logits, label, {}); }

double targeted_dlr_loss(std::span<const double> logits, int label, int target) {
  return dlr_targeted_impl(logits, label, target, {});
}

double loss_and_logit_gradient(LossKind kind, std::span<const double> logits, int label, int target,
                               std::span<double> grad) {
  switch (kind) {
    case LossKind::ce: return ce_impl(logits, label, grad);
    case LossKind::dlr: return dlr_impl(logits, label, grad);
    case LossKind::dlr_targeted: return dlr_targeted_impl(logits, label, target, grad);
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace advlens
