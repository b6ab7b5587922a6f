#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace advlens {

/// Attack objectives over the logit vector. All are maximised by an attacker.
enum class LossKind { ce, dlr, dlr_targeted };

std::string to_string(LossKind kind);
/// Accepts "ce", "dlr", "dlr-t".
LossKind parse_loss_kind(std::string_view text);

double ce_loss(std::span<const double> logits, int label);

/// -(z_y - max_{i!=y} z_i) / (z_(1) - z_(3)) with z_(k) the k-th largest logit.
/// Throws ConfigError when fewer than 4 classes, NumericError when the
/// denominator vanishes.
double dlr_loss(std::span<const double> logits, int label);

/// -(z_y - z_t) / (z_(1) - (z_(3) + z_(4)) / 2).
double targeted_dlr_loss(std::span<const double> logits, int label, int target);

/// Evaluates the loss and writes d loss / d logits into `grad`.
/// `target` is ignored unless kind == dlr_targeted.
double loss_and_logit_gradient(LossKind kind, std::span<const double> logits, int label, int target,
                               std::span<double> grad);

/// Index of the largest logit; ties go to the lowest index.
int argmax(std::span<const double> logits);

}  // namespace advlens
