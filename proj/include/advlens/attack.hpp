#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advlens/dataset.hpp"
#include "advlens/losses.hpp"
#include "advlens/network.hpp"

namespace advlens {

enum class Norm { l2, linf };

std::string to_string(Norm norm);
/// Accepts "l2", "linf".
Norm parse_norm(std::string_view text);

struct AttackConfig {
  Norm norm = Norm::linf;
  double epsilon = 8.0 / 255.0;
  std::size_t iterations = 100;
  LossKind loss = LossKind::ce;
  std::size_t num_targets = 9;  // capped at C-1 when the attack runs
  std::uint64_t seed = 0;       // recorded; APGD here is deterministic

  /// Throws ConfigError for negative epsilon, zero iterations, zero targets,
  /// or a DLR loss on fewer than 4 classes.
  void validate(std::size_t num_classes) const;
};

/// ||x - x0||_p for the configured norm.
double perturbation_norm(Norm norm, std::span<const double> x, std::span<const double> x0);

/// Projects `x` onto {z : ||z - x0||_p <= eps}, then clamps to [0,1].
void project_ball(std::span<double> x, std::span<const double> x0, Norm norm, double eps);
Tensor project_ball(const Tensor& x, const Tensor& x0, Norm norm, double eps);

struct AttackResult {
  std::vector<double> x_best;       // highest-loss iterate
  double best_loss = 0.0;
  bool success = false;             // argmax logits(x_best) != label
  int predicted = -1;               // argmax logits(x_best)
  int target = -1;                  // target class of the returned run (targeted only)
  std::vector<double> loss_trace;   // loss at x0 followed by one entry per iteration
};

/// Untargeted APGD on CE or DLR, started exactly at x0 with no restarts.
AttackResult apgd_attack(const Network& net, std::span<const double> x0, int label, const AttackConfig& config);

/// APGD on the targeted DLR loss against the `num_targets` highest-scoring
/// wrong classes at x0, tried in descending logit order. Stops at the first
/// run that misclassifies; otherwise returns the run with the highest loss.
AttackResult apgd_targeted(const Network& net, std::span<const double> x0, int label, const AttackConfig& config);

/// Dispatches on config.loss.
AttackResult run_attack(const Network& net, std::span<const double> x0, int label, const AttackConfig& config);

/// Clean/perturbed pairs for the correctly classified samples of a set.
struct AdversarialBatch {
  Tensor clean;       // [n, input...]
  Tensor perturbed;   // [n, input...]
  std::vector<int> labels;
  std::vector<bool> success;
  std::vector<std::size_t> source_index;  // position in the attacked dataset
  AttackConfig config;

  std::size_t size() const { return labels.size(); }
};

/// Attacks every sample the network classifies correctly; misclassified
/// samples are skipped. Samples run in parallel and results are independent
/// of scheduling.
AdversarialBatch attack_dataset(const Network& net, const LabeledDataset& data, const AttackConfig& config);

/// Accuracy over all of `data` after substituting the attacked samples by
/// their perturbed versions. Originally misclassified samples count as errors.
double robust_accuracy(const Network& net, const LabeledDataset& data, const AdversarialBatch& batch);

/// Directory layout: clean.bin, perturbed.bin (tensor files), metadata.json.
void save_adversarial_batch(const AdversarialBatch& batch, const std::filesystem::path& dir);
AdversarialBatch load_adversarial_batch(const std::filesystem::path& dir);

}  // namespace advlens
