#include "advlens/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "advlens/error.hpp"
#include "random.hpp"

namespace advlens {

std::vector<int> predict_labels(const Network& net, const Tensor& images) {
  std::vector<int> out(images.batch());
  Workspace ws;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(forward_sample(net, images.sample(i), ws));
  return out;
}

double evaluate_accuracy(const Network& net, const LabeledDataset& data) {
  if (data.size() == 0) throw ConfigError("evaluate_accuracy: empty dataset");
  const auto pred = predict_labels(net, data.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

TrainingReport train(Network& net, const LabeledDataset& data, const TrainConfig& config) {
  TrainingReport report;
  if (config.epochs == 0) return report;
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  if (!(config.learning_rate > 0.0) || config.batch_size == 0) {
    throw ConfigError("train: learning rate and batch size must be positive");
  }
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  ParameterGradients grads(net);
  ParameterGradients velocity(net);
  Workspace ws;
  std::vector<double> dlogits(net.num_classes());
  std::vector<double> dinput(net.input_size());
  auto layers = net.mutable_layers();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rnd::shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grads.zero();
      for (std::size_t b = start; b < end; ++b) {
        const auto x = data.images.sample(order[b]);
        auto logits = forward_sample(net, x, ws);
        epoch_loss += loss_and_logit_gradient(LossKind::ce, logits, data.labels[order[b]], -1, dlogits);
        backward_sample(net, x, ws, dlogits, dinput, &grads);
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t k = 0; k < layers.size(); ++k) {
        auto step = [&](std::vector<double>& param, std::vector<double>& g, std::vector<double>& v) {
          for (std::size_t i = 0; i < param.size(); ++i) {
            v[i] = config.momentum * v[i] - scale * g[i];
            param[i] += v[i];
          }
        };
        step(layers[k].weight.values(), grads.weight[k], velocity.weight[k]);
        step(layers[k].bias.values(), grads.bias[k], velocity.bias[k]);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("training diverged (non-finite loss) in epoch " + std::to_string(epoch + 1));
    }
    report.epoch_loss.push_back(epoch_loss);
    report.epoch_accuracy.push_back(evaluate_accuracy(net, data));
  }
  report.final_accuracy = report.epoch_accuracy.back();
  return report;
}

}  // namespace advlens
