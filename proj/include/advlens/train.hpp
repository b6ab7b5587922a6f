#pragma once

#include <cstdint>
#include <vector>

#include "advlens/dataset.hpp"
#include "advlens/network.hpp"

namespace advlens {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainingReport {
  std::vector<double> epoch_loss;      // mean cross-entropy over the epoch
  std::vector<double> epoch_accuracy;  // training accuracy after each epoch
  double final_accuracy = 0.0;
};

/// Mini-batch SGD with heavy-ball momentum on cross-entropy. Deterministic in
/// `config.seed`. Throws NumericError naming the epoch if the loss diverges.
TrainingReport train(Network& net, const LabeledDataset& data, const TrainConfig& config);

/// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
double evaluate_accuracy(const Network& net, const LabeledDataset& data);

std::vector<int> predict_labels(const Network& net, const Tensor& images);

}  // namespace advlens
