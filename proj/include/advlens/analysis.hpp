#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlens/attack.hpp"
#include "advlens/dataset.hpp"
#include "advlens/metric.hpp"
#include "advlens/network.hpp"
#include "advlens/tsne.hpp"

namespace advlens {

/// conv-relu-pool x2, then a hidden dense layer and a logits layer.
/// Layer names: conv1 relu1 pool1 conv2 relu2 pool2 flatten fc1 relu3 logits.
NetworkSpec toy_cnn_spec(const Shape& input_shape, std::size_t num_classes);

struct AnalysisConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path model_path;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t n_validation = 200;
  std::size_t n_test = 200;
  AttackConfig attack;
  TsneConfig tsne;
  std::vector<std::string> capture_layers;  // empty = every layer
  std::filesystem::path output_dir = "advlens_out";
  bool reuse_embeddings = true;
  bool render_maps = true;

  /// Seeds non-empty, split sizes fit the dataset, attack and t-SNE valid.
  void validate(std::size_t dataset_size, std::size_t num_classes) const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults. "layers" may be "all" or a list.
  static AnalysisConfig from_json(const nlohmann::json& j);
};

struct SeedSummary {
  std::uint64_t seed = 0;
  std::size_t n_validation = 0;
  std::size_t n_pairs = 0;
  std::size_t n_misclassified = 0;
  std::size_t n_successful = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double attack_seconds = 0.0;
  double analysis_seconds = 0.0;
};

struct FileRecord {
  std::string path;  // relative to the output directory
  std::string hash;
};

struct RunManifest {
  nlohmann::json config;
  std::string tool_version;
  std::vector<SeedSummary> seeds;
  std::vector<LayerRobustnessReport> reports;
  std::vector<FileRecord> files;
  std::vector<std::string> failures;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Full pipeline over every seed: split, clean accuracy, attack the correctly
/// classified validation images, capture layers, joint t-SNE per layer,
/// overlap metric, persistence. Output directory layout:
///   reports.csv, reports.json, accuracy.json, manifest.json
///   seed_<s>/adversarial/   seed_<s>/embeddings/<layer>.csv
///   seed_<s>/maps/*.svg     seed_<s>/report.json
///   cache/embeddings/<key>.json
/// A failing layer is recorded and the run continues.
RunManifest run_analysis(const AnalysisConfig& config, const Network& net, const LabeledDataset& data);
RunManifest run_analysis(const AnalysisConfig& config);

/// Representations of clean, perturbed and misclassified samples for the
/// requested layers (in network order).
std::vector<LayerRepresentations> capture_representations(const Network& net, const AdversarialBatch& batch,
                                                          const Tensor& misclassified,
                                                          const std::vector<std::string>& layers);

/// Layer names in network order, "input" first when present; an empty
/// request means the raw input plus every layer.
std::vector<std::string> resolve_layers(const Network& net, const std::vector<std::string>& requested);

struct EpsilonCalibration {
  double epsilon = 0.0;
  double robust_accuracy = 1.0;
  bool reached = false;
  std::vector<std::pair<double, double>> sweep;  // (epsilon, robust accuracy)
};

/// Walks `grid` in order and stops at the first epsilon whose robust
/// accuracy on `data` is at most `target`.
EpsilonCalibration calibrate_epsilon(const Network& net, const LabeledDataset& data, const AttackConfig& base,
                                     const std::vector<double>& grid, double target = 0.05);

}  // namespace advlens
