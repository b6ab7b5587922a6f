#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "advlens/tensor.hpp"

namespace advlens {

/// Images in [0,1] with integer labels in [0, num_classes).
struct LabeledDataset {
  Tensor images;  // [N, C, H, W] (or any [N, ...] sample shape)
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Throws ConfigError when counts disagree, pixels leave [0,1] or labels
  /// leave [0, num_classes).
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

/// Class-prototype image generator: each class owns a smooth random pattern,
/// each sample adds independent smooth noise around mid-grey, then clips to
/// [0,1].
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t samples_per_class = 240;
  double signal = 0.25;    // prototype amplitude (max |value|)
  double noise = 0.08;     // per-pixel noise standard deviation
  double noise_smoothing = 1.0;  // Gaussian blur radius of the noise, pixels
  std::size_t blobs_per_class = 4;
  std::uint64_t prototype_seed = 1;
  std::uint64_t sample_seed = 2;
};

/// Samples are interleaved by class (0,1,...,C-1,0,1,...).
LabeledDataset make_synthetic_dataset(const SyntheticSpec& spec);

struct Split {
  LabeledDataset validation;
  LabeledDataset test;
  std::vector<std::size_t> validation_index;  // positions in the source set
  std::vector<std::size_t> test_index;
};

/// Stratified, seeded split. Per-class counts follow proportional allocation
/// (largest remainder), so each class is within one sample of its exact share.
/// Both halves are returned shuffled.
Split stratified_split(const LabeledDataset& data, std::uint64_t seed, std::size_t n_validation,
                       std::size_t n_test);

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace advlens
