#include "advlens/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "advlens/error.hpp"
#include "random.hpp"

namespace advlens {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::maxpool2d, LayerKind::flatten}) {
    if (text == to_string(k)) return k;
  }
  throw FormatError("unknown layer kind '" + std::string(text) + "'");
}

LayerSpec LayerSpec::conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel, std::size_t stride, std::size_t padding) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::conv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t in_units, std::size_t out_units) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::dense;
  s.in_units = in_units;
  s.out_units = out_units;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::string name, std::size_t size, std::size_t stride) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::maxpool2d;
  s.kernel = size;
  s.stride = stride == 0 ? size : stride;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::flatten;
  return s;
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {}

std::size_t Network::num_classes() const {
  return layers_.empty() ? shape_size(input_shape_) : shape_size(layers_.back().output_shape);
}

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers_.size());
  for (const auto& l : layers_) names.push_back(l.spec.name);
  return names;
}

std::size_t Network::layer_index(std::string_view name) const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].spec.name == name) return k;
  }
  std::string valid;
  for (const auto& l : layers_) valid += (valid.empty() ? "" : ", ") + l.spec.name;
  throw ConfigError("unknown layer '" + std::string(name) + "'; valid layers: " + valid);
}

NetworkSpec Network::spec() const {
  NetworkSpec s{input_shape_, {}};
  for (const auto& l : layers_) s.layers.push_back(l.spec);
  return s;
}

namespace {

[[noreturn]] void mismatch(const std::string& prev, const LayerSpec& layer, const Shape& got,
                           const std::string& expected) {
  throw ConfigError("shape mismatch between '" + prev + "' and '" + layer.name + "': '" + layer.name +
                    "' (" + to_string(layer.kind) + ") expects " + expected + " but '" + prev +
                    "' produces " + shape_string(got));
}

Shape infer_output(const LayerSpec& spec, const Shape& in, const std::string& prev) {
  switch (spec.kind) {
    case LayerKind::conv2d: {
      if (spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0 || spec.in_channels == 0) {
        throw ConfigError("layer '" + spec.name + "': conv2d needs positive channels, kernel and stride");
      }
      if (in.size() != 3 || in[0] != spec.in_channels) {
        mismatch(prev, spec, in, "[" + std::to_string(spec.in_channels) + "xHxW]");
      }
      if (in[1] + 2 * spec.padding < spec.kernel || in[2] + 2 * spec.padding < spec.kernel) {
        mismatch(prev, spec, in, "spatial size >= kernel " + std::to_string(spec.kernel));
      }
      return {spec.out_channels, (in[1] + 2 * spec.padding - spec.kernel) / spec.stride + 1,
              (in[2] + 2 * spec.padding - spec.kernel) / spec.stride + 1};
    }
    case LayerKind::maxpool2d: {
      if (spec.kernel == 0 || spec.stride == 0) {
        throw ConfigError("layer '" + spec.name + "': maxpool2d needs positive size and stride");
      }
      if (in.size() != 3 || in[1] < spec.kernel || in[2] < spec.kernel) {
        mismatch(prev, spec, in, "[CxHxW] with H,W >= " + std::to_string(spec.kernel));
      }
      return {in[0], (in[1] - spec.kernel) / spec.stride + 1, (in[2] - spec.kernel) / spec.stride + 1};
    }
    case LayerKind::dense:
      if (spec.in_units == 0 || spec.out_units == 0) {
        throw ConfigError("layer '" + spec.name + "': dense needs positive unit counts");
      }
      if (in.size() != 1 || in[0] != spec.in_units) {
        mismatch(prev, spec, in, "[" + std::to_string(spec.in_units) + "]");
      }
      return {spec.out_units};
    case LayerKind::relu: return in;
    case LayerKind::flatten: return {shape_size(in)};
  }
  throw ConfigError("unknown layer kind");
}

}  // namespace

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.input_shape.empty() || shape_size(spec.input_shape) == 0) {
    throw ConfigError("network input shape must be non-empty with positive dimensions");
  }
  std::set<std::string> names;
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  Shape shape = spec.input_shape;
  std::string prev = "input";
  for (const auto& ls : spec.layers) {
    if (ls.name.empty()) throw ConfigError("layer names must be non-empty");
    if (ls.name == "input" || !names.insert(ls.name).second) {
      throw ConfigError("duplicate or reserved layer name '" + ls.name + "'");
    }
    Layer layer;
    layer.spec = ls;
    layer.input_shape = shape;
    layer.output_shape = infer_output(ls, shape, prev);
    std::size_t fan_in = 0;
    if (ls.kind == LayerKind::conv2d) {
      layer.weight = Tensor({ls.out_channels, ls.in_channels, ls.kernel, ls.kernel});
      layer.bias = Tensor({ls.out_channels});
      fan_in = ls.in_channels * ls.kernel * ls.kernel;
    } else if (ls.kind == LayerKind::dense) {
      layer.weight = Tensor({ls.out_units, ls.in_units});
      layer.bias = Tensor({ls.out_units});
      fan_in = ls.in_units;
    }
    if (fan_in > 0) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& w : layer.weight.values()) w = bound * (rnd::uniform(rng, -1.0, 1.0));
    }
    shape = layer.output_shape;
    prev = ls.name;
    layers.push_back(std::move(layer));
  }
  if (shape.size() != 1) {
    throw ConfigError("network must end in a flat logits vector, got " + shape_string(shape));
  }
  return Network(spec.input_shape, std::move(layers));
}

namespace {

void conv_forward(const Layer& l, std::span<const double> in, std::vector<double>& out) {
  const auto& s = l.spec;
  const std::size_t C = l.input_shape[0], H = l.input_shape[1], W = l.input_shape[2];
  const std::size_t OC = l.output_shape[0], OH = l.output_shape[1], OW = l.output_shape[2];
  const std::size_t K = s.kernel;
  const auto& w = l.weight.values();
  out.assign(OC * OH * OW, 0.0);
  for (std::size_t oc = 0; oc < OC; ++oc) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double acc = l.bias[oc];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += w[((oc * C + c) * K + ky) * K + kx] * in[(c * H + iy) * W + ix];
            }
          }
        }
        out[(oc * OH + oy) * OW + ox] = acc;
      }
    }
  }
}

void conv_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                   std::span<double> gin, std::vector<double>* gw, std::vector<double>* gb) {
  const auto& s = l.spec;
  const std::size_t C = l.input_shape[0], H = l.input_shape[1], W = l.input_shape[2];
  const std::size_t OC = l.output_shape[0], OH = l.output_shape[1], OW = l.output_shape[2];
  const std::size_t K = s.kernel;
  const auto& w = l.weight.values();
  std::fill(gin.begin(), gin.end(), 0.0);
  for (std::size_t oc = 0; oc < OC; ++oc) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const double g = gout[(oc * OH + oy) * OW + ox];
        if (g == 0.0) continue;
        if (gb) (*gb)[oc] += g;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t wi = ((oc * C + c) * K + ky) * K + kx;
              const std::size_t ii = (c * H + iy) * W + ix;
              gin[ii] += w[wi] * g;
              if (gw) (*gw)[wi] += in[ii] * g;
            }
          }
        }
      }
    }
  }
}

void pool_forward(const Layer& l, std::span<const double> in, std::vector<double>& out,
                  std::vector<std::size_t>& arg) {
  const std::size_t H = l.input_shape[1], W = l.input_shape[2];
  const std::size_t C = l.output_shape[0], OH = l.output_shape[1], OW = l.output_shape[2];
  const std::size_t K = l.spec.kernel, S = l.spec.stride;
  out.assign(C * OH * OW, 0.0);
  arg.assign(out.size(), 0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::size_t ii = (c * H + oy * S + ky) * W + ox * S + kx;
            if (in[ii] > best) {
              best = in[ii];
              best_i = ii;
            }
          }
        }
        const std::size_t oi = (c * OH + oy) * OW + ox;
        out[oi] = best;
        arg[oi] = best_i;
      }
    }
  }
}

void dense_forward(const Layer& l, std::span<const double> in, std::vector<double>& out) {
  const std::size_t O = l.spec.out_units, I = l.spec.in_units;
  const auto& w = l.weight.values();
  out.assign(O, 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    double acc = l.bias[o];
    const double* row = w.data() + o * I;
    for (std::size_t i = 0; i < I; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void dense_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                    std::span<double> gin, std::vector<double>* gw, std::vector<double>* gb) {
  const std::size_t O = l.spec.out_units, I = l.spec.in_units;
  const auto& w = l.weight.values();
  std::fill(gin.begin(), gin.end(), 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    const double g = gout[o];
    if (g == 0.0) continue;
    if (gb) (*gb)[o] += g;
    const double* row = w.data() + o * I;
    for (std::size_t i = 0; i < I; ++i) gin[i] += row[i] * g;
    if (gw) {
      double* grow = gw->data() + o * I;
      for (std::size_t i = 0; i < I; ++i) grow[i] += in[i] * g;
    }
  }
}

}  // namespace

std::span<const double> forward_sample(const Network& net, std::span<const double> x, Workspace& ws) {
  if (x.size() != net.input_size()) {
    throw ConfigError("input has " + std::to_string(x.size()) + " values, network expects " +
                      shape_string(net.input_shape()));
  }
  const auto layers = net.layers();
  ws.outputs.resize(layers.size());
  ws.pool_argmax.resize(layers.size());
  std::span<const double> cur = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& l = layers[k];
    auto& out = ws.outputs[k];
    switch (l.spec.kind) {
      case LayerKind::conv2d: conv_forward(l, cur, out); break;
      case LayerKind::dense: dense_forward(l, cur, out); break;
      case LayerKind::maxpool2d: pool_forward(l, cur, out, ws.pool_argmax[k]); break;
      case LayerKind::relu:
        out.resize(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] > 0.0 ? cur[i] : 0.0;
        break;
      case LayerKind::flatten: out.assign(cur.begin(), cur.end()); break;
    }
    cur = out;
  }
  return cur;
}

ParameterGradients::ParameterGradients(const Network& net) {
  for (const auto& l : net.layers()) {
    weight.emplace_back(l.weight.size(), 0.0);
    bias.emplace_back(l.bias.size(), 0.0);
  }
}

void ParameterGradients::zero() {
  for (auto& v : weight) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : bias) std::fill(v.begin(), v.end(), 0.0);
}

void backward_sample(const Network& net, std::span<const double> x, const Workspace& ws,
                     std::span<const double> logit_grad, std::span<double> input_grad,
                     ParameterGradients* params) {
  const auto layers = net.layers();
  if (layers.empty()) {
    std::copy(logit_grad.begin(), logit_grad.end(), input_grad.begin());
    return;
  }
  std::vector<double> gout(logit_grad.begin(), logit_grad.end());
  std::vector<double> gin;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Layer& l = layers[k];
    std::span<const double> in = k == 0 ? x : std::span<const double>(ws.outputs[k - 1]);
    gin.assign(in.size(), 0.0);
    auto* gw = params ? &params->weight[k] : nullptr;
    auto* gb = params ? &params->bias[k] : nullptr;
    switch (l.spec.kind) {
      case LayerKind::conv2d: conv_backward(l, in, gout, gin, gw, gb); break;
      case LayerKind::dense: dense_backward(l, in, gout, gin, gw, gb); break;
      case LayerKind::maxpool2d: {
        const auto& arg = ws.pool_argmax[k];
        for (std::size_t i = 0; i < gout.size(); ++i) gin[arg[i]] += gout[i];
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
        break;
      case LayerKind::flatten: gin = gout; break;
    }
    std::swap(gin, gout);
  }
  std::copy(gout.begin(), gout.end(), input_grad.begin());
}

ForwardCapture forward_capture(const Network& net, const Tensor& batch,
                               const std::vector<std::string>& capture_layers) {
  const Shape expected_sample = net.input_shape();
  if (batch.rank() != expected_sample.size() + 1 || batch.sample_shape() != expected_sample) {
    throw ConfigError("batch shape " + shape_string(batch.shape()) + " does not match network input " +
                      shape_string(expected_sample));
  }
  // Index npos stands for the raw input under the reserved name "input".
  constexpr std::size_t raw = static_cast<std::size_t>(-1);
  std::vector<std::pair<std::string, std::size_t>> wanted;
  for (const auto& name : capture_layers) {
    const std::size_t k = name == "input" ? raw : net.layer_index(name);
    if (std::none_of(wanted.begin(), wanted.end(), [&](const auto& p) { return p.first == name; })) {
      wanted.emplace_back(name, k);
    }
  }
  const std::size_t n = batch.batch();
  ForwardCapture result;
  result.logits = Tensor({n, net.num_classes()});
  for (const auto& [name, k] : wanted) {
    const Shape& s = k == raw ? net.input_shape() : net.layers()[k].output_shape;
    result.captures.layers.emplace(name, Tensor({n, shape_size(s)}));
  }
  Workspace ws;
  for (std::size_t i = 0; i < n; ++i) {
    auto logits = forward_sample(net, batch.sample(i), ws);
    std::copy(logits.begin(), logits.end(), result.logits.sample(i).begin());
    for (const auto& [name, k] : wanted) {
      auto dst = result.captures.layers.at(name).sample(i).begin();
      if (k == raw) {
        const auto in = batch.sample(i);
        std::copy(in.begin(), in.end(), dst);
      } else {
        const auto& out = ws.outputs[k];
        std::copy(out.begin(), out.end(), dst);
      }
    }
  }
  return result;
}

double loss_input_gradient(const Network& net, std::span<const double> x, int label, LossKind kind,
                           int target, std::span<double> grad, Workspace& ws) {
  auto logits = forward_sample(net, x, ws);
  std::vector<double> dlogits(logits.size());
  const double loss = loss_and_logit_gradient(kind, logits, label, target, dlogits);
  backward_sample(net, x, ws, dlogits, grad, nullptr);
  return loss;
}

LossGradient loss_input_gradient(const Network& net, const Tensor& x, std::span<const int> labels,
                                 LossKind kind, std::span<const int> targets) {
  const bool single = x.shape() == net.input_shape();
  const std::size_t n = single ? 1 : x.batch();
  if (!single && x.sample_shape() != net.input_shape()) {
    throw ConfigError("input shape " + shape_string(x.shape()) + " does not match network input " +
                      shape_string(net.input_shape()));
  }
  if (labels.size() != n) throw ConfigError("expected one label per sample");
  if (kind == LossKind::dlr_targeted && targets.size() != n) {
    throw ConfigError("targeted loss needs one target per sample");
  }
  LossGradient out{0.0, Tensor(x.shape())};
  Workspace ws;
  const std::size_t d = net.input_size();
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.data().subspan(i * d, d);
    auto gi = out.grad.data().subspan(i * d, d);
    const int t = kind == LossKind::dlr_targeted ? targets[i] : -1;
    out.loss += loss_input_gradient(net, xi, labels[i], kind, t, gi, ws);
  }
  return out;
}

std::vector<double> predict_logits(const Network& net, std::span<const double> x) {
  Workspace ws;
  auto z = forward_sample(net, x, ws);
  return {z.begin(), z.end()};
}

}  // namespace advlens
