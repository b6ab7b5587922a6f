#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advlens/losses.hpp"
#include "advlens/tensor.hpp"

namespace advlens {

enum class LayerKind { conv2d, dense, relu, maxpool2d, flatten };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// Declarative description of one layer. Which fields matter depends on `kind`:
/// conv2d uses channels/kernel/stride/padding, maxpool2d uses kernel/stride,
/// dense uses units.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::flatten;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_units = 0;
  std::size_t out_units = 0;

  static LayerSpec conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec dense(std::string name, std::size_t in_units, std::size_t out_units);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool2d(std::string name, std::size_t size, std::size_t stride = 0);
  static LayerSpec flatten(std::string name);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  Shape input_shape;  // per sample, e.g. {channels, height, width}
  std::vector<LayerSpec> layers;
};

struct Layer {
  LayerSpec spec;
  Shape input_shape;
  Shape output_shape;
  Tensor weight;  // empty for parameter-free layers
  Tensor bias;
};

/// Feed-forward classifier. The last layer emits raw logits; softmax only
/// ever appears inside loss functions.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t input_size() const { return shape_size(input_shape_); }
  std::span<const Layer> layers() const { return layers_; }
  std::span<Layer> mutable_layers() { return layers_; }
  std::size_t num_classes() const;

  std::vector<std::string> layer_names() const;
  /// Throws ConfigError listing the valid names when `name` is unknown.
  std::size_t layer_index(std::string_view name) const;

  NetworkSpec spec() const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
};

/// Validates shapes and initialises parameters (He-uniform weights, zero
/// biases) from `seed`. Same spec and seed give bit-identical parameters.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Per-sample activation buffers reused across forward/backward calls.
struct Workspace {
  std::vector<std::vector<double>> outputs;
  std::vector<std::vector<std::size_t>> pool_argmax;
};

/// Runs one sample; workspace.outputs[k] holds the output of layer k.
std::span<const double> forward_sample(const Network& net, std::span<const double> x, Workspace& ws);

/// Gradients with respect to every parameter tensor, laid out like the net.
struct ParameterGradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  explicit ParameterGradients(const Network& net);
  void zero();
};

/// Back-propagates d loss / d logits through the state left by forward_sample.
/// Writes d loss / d input into `input_grad` and, if `params` is non-null,
/// accumulates parameter gradients into it.
void backward_sample(const Network& net, std::span<const double> x, const Workspace& ws,
                     std::span<const double> logit_grad, std::span<double> input_grad,
                     ParameterGradients* params);

/// Flattened per-sample activations keyed by layer name; each tensor is [N, D].
struct CaptureSet {
  std::map<std::string, Tensor> layers;

  const Tensor& at(const std::string& name) const { return layers.at(name); }
  bool contains(const std::string& name) const { return layers.count(name) != 0; }
  std::size_t size() const { return layers.size(); }
};

struct ForwardCapture {
  Tensor logits;  // [N, C]
  CaptureSet captures;
};

/// `batch` is [N, input_shape...]. Each requested layer output is recorded
/// flattened to [N, features]; the reserved name "input" records the raw batch.
ForwardCapture forward_capture(const Network& net, const Tensor& batch,
                               const std::vector<std::string>& capture_layers);

struct LossGradient {
  double loss = 0.0;
  Tensor grad;  // same shape as the input
};

/// d loss / d x with the parameters held fixed. `x` is a single sample
/// (input shape) or a batch; for a batch the loss is the sum over samples and
/// `labels`/`targets` must have one entry per sample.
LossGradient loss_input_gradient(const Network& net, const Tensor& x, std::span<const int> labels,
                                 LossKind kind, std::span<const int> targets = {});

/// Single-sample form used inside attack loops.
double loss_input_gradient(const Network& net, std::span<const double> x, int label, LossKind kind,
                           int target, std::span<double> grad, Workspace& ws);

/// Logits of one sample.
std::vector<double> predict_logits(const Network& net, std::span<const double> x);

}  // namespace advlens
