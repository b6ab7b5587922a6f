#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "advlens/dataset.hpp"
#include "advlens/error.hpp"
#include "advlens/network.hpp"
#include "advlens/serialize.hpp"
#include "advlens/train.hpp"
#include "oracles.hpp"

using namespace advlens;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "advlens_test_netcore";
  std::filesystem::create_directories(dir);
  return dir / name;
}

LabeledDataset blobs(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  LabeledDataset d;
  d.num_classes = 2;
  d.images = Tensor({2 * per_class, 2});
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int y = static_cast<int>(i % 2);
    const double cx = y == 0 ? 0.25 : 0.75;
    d.images[2 * i] = std::clamp(cx + n(rng), 0.0, 1.0);
    d.images[2 * i + 1] = std::clamp(cx + n(rng), 0.0, 1.0);
    d.labels.push_back(y);
  }
  return d;
}

// Dense layer with a hand-set weight matrix and zero bias.
Network linear_net(const std::vector<std::vector<double>>& w) {
  const std::size_t out = w.size(), in = w[0].size();
  Network net = build_network({{in}, {LayerSpec::dense("fc", in, out)}}, 0);
  auto& layer = net.mutable_layers()[0];
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) layer.weight[o * in + i] = w[o][i];
  }
  std::fill(layer.bias.values().begin(), layer.bias.values().end(), 0.0);
  return net;
}

}  // namespace

TEST_CASE("building the same spec with the same seed gives identical parameters") {
  const NetworkSpec spec{{4}, {LayerSpec::dense("fc", 4, 2)}};
  const Network a = build_network(spec, 7);
  const Network b = build_network(spec, 7);
  CHECK(a.layers()[0].weight == b.layers()[0].weight);
  CHECK(a.layers()[0].bias == b.layers()[0].bias);
  const Network c = build_network(spec, 8);
  CHECK_FALSE(a.layers()[0].weight == c.layers()[0].weight);
}

TEST_CASE("weights follow the fan-in uniform bound and biases start at zero") {
  const Network net = build_network({{3, 6, 6}, {LayerSpec::conv2d("c", 3, 4, 3), LayerSpec::flatten("f"),
                                                 LayerSpec::dense("d", 64, 5)}},
                                    3);
  const double conv_bound = std::sqrt(6.0 / 27.0), dense_bound = std::sqrt(6.0 / 64.0);
  for (double w : net.layers()[0].weight.values()) CHECK(std::abs(w) <= conv_bound);
  for (double w : net.layers()[2].weight.values()) CHECK(std::abs(w) <= dense_bound);
  for (double b : net.layers()[2].bias.values()) CHECK(b == 0.0);
}

TEST_CASE("channel mismatch is a configuration error naming both layers") {
  const NetworkSpec spec{{1, 5, 5}, {LayerSpec::conv2d("conv_a", 3, 2, 3), LayerSpec::flatten("flat")}};
  try {
    build_network(spec, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("input") != std::string::npos);
    CHECK(msg.find("conv_a") != std::string::npos);
  }
  const NetworkSpec dense_gap{{4}, {LayerSpec::dense("d1", 4, 3), LayerSpec::dense("d2", 5, 2)}};
  try {
    build_network(dense_gap, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("d1") != std::string::npos);
    CHECK(msg.find("d2") != std::string::npos);
  }
}

TEST_CASE("layer names must be unique and may not shadow the raw input") {
  CHECK_THROWS_AS(build_network({{4}, {LayerSpec::dense("x", 4, 4), LayerSpec::dense("x", 4, 2)}}, 0), ConfigError);
  CHECK_THROWS_AS(build_network({{4}, {LayerSpec::dense("input", 4, 2)}}, 0), ConfigError);
}

TEST_CASE("flatten then dense on a 2x2x2 input yields three logits") {
  const Network net = build_network({{2, 2, 2}, {LayerSpec::flatten("f"), LayerSpec::dense("d", 8, 3)}}, 1);
  CHECK(net.num_classes() == 3);
  const Tensor x({2, 2, 2}, 0.5);
  CHECK(predict_logits(net, x.data()).size() == 3);
}

TEST_CASE("output shapes follow conv and pool arithmetic") {
  const Network net = build_network({{1, 9, 9},
                                     {LayerSpec::conv2d("c", 1, 2, 3, 2, 1), LayerSpec::relu("r"),
                                      LayerSpec::maxpool2d("p", 2), LayerSpec::flatten("f"),
                                      LayerSpec::dense("d", 8, 4)}},
                                    0);
  CHECK(net.layers()[0].output_shape == Shape{2, 5, 5});
  CHECK(net.layers()[2].output_shape == Shape{2, 2, 2});
  CHECK(net.layers()[3].output_shape == Shape{8});
}

TEST_CASE("empty capture request returns logits and no captures") {
  std::mt19937_64 rng(1);
  const Network net = oracle::random_network(rng, false);
  const Tensor x = oracle::random_tensor(rng, {3, net.input_shape()[0]}, 0, 1);
  const auto fc = forward_capture(net, x, {});
  CHECK(fc.captures.size() == 0);
  CHECK(fc.logits.shape() == Shape{3, net.num_classes()});
}

TEST_CASE("capturing a lone flatten layer reproduces the flattened input") {
  const Network net = build_network({{2, 3, 2}, {LayerSpec::flatten("flat")}}, 0);
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor(rng, {4, 2, 3, 2}, 0, 1);
  const auto fc = forward_capture(net, x, {"flat"});
  CHECK(fc.captures.at("flat").shape() == Shape{4, 12});
  CHECK(fc.captures.at("flat").values() == x.values());
  CHECK(fc.logits.values() == x.values());
  CHECK(forward_capture(net, x, {"input"}).captures.at("input").values() == x.values());
}

TEST_CASE("two-layer capture matches a direct forward evaluation") {
  std::mt19937_64 rng(3);
  Network net = build_network({{3}, {LayerSpec::dense("a", 3, 4), LayerSpec::dense("b", 4, 5)}}, 11);
  for (auto& l : net.mutable_layers()) {
    for (auto& v : l.bias.values()) v = oracle::uniform(rng, -1, 1);
  }
  const Tensor x = oracle::random_tensor(rng, {2, 3}, 0, 1);
  const auto fc = forward_capture(net, x, {"a", "b"});
  CHECK(fc.captures.at("b").values() == fc.logits.values());
  const auto& a = net.layers()[0];
  const auto& b = net.layers()[1];
  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> h(4);
    for (std::size_t o = 0; o < 4; ++o) {
      h[o] = a.bias[o];
      for (std::size_t i = 0; i < 3; ++i) h[o] += a.weight[o * 3 + i] * x[n * 3 + i];
      CHECK(fc.captures.at("a")[n * 4 + o] == doctest::Approx(h[o]).epsilon(1e-14));
    }
    for (std::size_t o = 0; o < 5; ++o) {
      double z = b.bias[o];
      for (std::size_t i = 0; i < 4; ++i) z += b.weight[o * 4 + i] * h[i];
      CHECK(fc.logits[n * 5 + o] == doctest::Approx(z).epsilon(1e-14));
    }
  }
}

TEST_CASE("unknown capture layer lists the valid names") {
  const Network net = build_network({{4}, {LayerSpec::dense("alpha", 4, 4), LayerSpec::dense("beta", 4, 4)}}, 0);
  try {
    forward_capture(net, Tensor({1, 4}), {"gamma"});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gamma") != std::string::npos);
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("beta") != std::string::npos);
  }
}

TEST_CASE("batch shape mismatch is rejected") {
  const Network net = build_network({{4}, {LayerSpec::dense("d", 4, 4)}}, 0);
  CHECK_THROWS_AS(forward_capture(net, Tensor({2, 5}), {}), ConfigError);
}

TEST_CASE("capture of the last layer equals the logits for every batch size") {
  std::mt19937_64 rng(4);
  for (bool conv : {false, true}) {
    const Network net = oracle::random_network(rng, conv);
    const std::string last = net.layer_names().back();
    for (std::size_t n : {1u, 3u, 7u}) {
      Shape s{n};
      s.insert(s.end(), net.input_shape().begin(), net.input_shape().end());
      const auto fc = forward_capture(net, oracle::random_tensor(rng, s, 0, 1), net.layer_names());
      CHECK(fc.captures.at(last) == fc.logits);
      for (const auto& layer : net.layers()) {
        CHECK(fc.captures.at(layer.spec.name).shape() == Shape{n, shape_size(layer.output_shape)});
      }
    }
  }
}

TEST_CASE("linear softmax gradient matches the closed form") {
  const std::vector<std::vector<double>> w{{0.3, -0.2, 0.5}, {-0.4, 0.1, 0.2}, {0.7, 0.6, -0.3}};
  const Network net = linear_net(w);
  const Tensor x({3}, std::vector<double>{0.2, 0.9, 0.4});
  const int y = 1;
  const auto lg = loss_input_gradient(net, x, std::vector<int>{y}, LossKind::ce);
  std::vector<double> z(3);
  for (int o = 0; o < 3; ++o) z[o] = w[o][0] * x[0] + w[o][1] * x[1] + w[o][2] * x[2];
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  for (int i = 0; i < 3; ++i) {
    double g = 0.0;
    for (int o = 0; o < 3; ++o) g += w[o][i] * (std::exp(z[o] - m) / s - (o == y ? 1.0 : 0.0));
    CHECK(lg.grad[i] == doctest::Approx(g).epsilon(1e-13));
  }
  CHECK(lg.loss == doctest::Approx(oracle::ce(z, y)).epsilon(1e-13));
}

TEST_CASE("a constant network has zero input gradient") {
  Network net = build_network({{5}, {LayerSpec::dense("d", 5, 4)}}, 0);
  for (auto& v : net.mutable_layers()[0].weight.values()) v = 0.0;
  net.mutable_layers()[0].bias.values() = {1.0, 2.0, 3.0, 4.0};
  for (LossKind k : {LossKind::ce, LossKind::dlr}) {
    const auto lg = loss_input_gradient(net, Tensor({5}, 0.3), std::vector<int>{0}, k);
    for (double g : lg.grad.values()) CHECK(g == 0.0);
  }
}

TEST_CASE("random two-layer gradients agree with central differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = oracle::random_network(rng, false);
    const Tensor x = oracle::random_tensor(rng, net.input_shape(), 0.1, 0.9);
    const int y = static_cast<int>(oracle::pick(rng, 0, net.num_classes() - 1));
    const auto lg = loss_input_gradient(net, x, std::vector<int>{y}, LossKind::ce);
    const auto fd = oracle::fd_input_gradient(net, x.data(), LossKind::ce, y, -1);
    CHECK(oracle::relative_error(lg.grad.data(), fd) < 1e-5);
  }
}

TEST_CASE("all loss kinds agree with central differences on dense and conv nets") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 12; ++trial) {
    const Network net = oracle::random_network(rng, trial % 2 == 1);
    const Tensor x = oracle::random_tensor(rng, net.input_shape(), 0.1, 0.9);
    const int y = static_cast<int>(oracle::pick(rng, 0, net.num_classes() - 1));
    const int t = static_cast<int>((y + 1) % net.num_classes());
    for (LossKind k : {LossKind::ce, LossKind::dlr, LossKind::dlr_targeted}) {
      const auto lg = loss_input_gradient(net, x, std::vector<int>{y}, k, std::vector<int>{t});
      const auto fd = oracle::fd_input_gradient(net, x.data(), k, y, t);
      CHECK(oracle::relative_error(lg.grad.data(), fd) < 1e-4);
    }
  }
}

TEST_CASE("batched gradient equals per-sample gradients") {
  std::mt19937_64 rng(7);
  const Network net = oracle::random_network(rng, true);
  Shape s{3};
  s.insert(s.end(), net.input_shape().begin(), net.input_shape().end());
  const Tensor xb = oracle::random_tensor(rng, s, 0, 1);
  const std::vector<int> y{0, 1, 2};
  const auto batch = loss_input_gradient(net, xb, y, LossKind::ce);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor xi(net.input_shape(), std::vector<double>(xb.sample(i).begin(), xb.sample(i).end()));
    const auto one = loss_input_gradient(net, xi, std::vector<int>{y[i]}, LossKind::ce);
    total += one.loss;
    CHECK(std::equal(one.grad.values().begin(), one.grad.values().end(), batch.grad.sample(i).begin()));
  }
  CHECK(batch.loss == doctest::Approx(total).epsilon(1e-14));
}

TEST_CASE("DLR losses on fewer than four classes are unsupported") {
  const Network net = build_network({{2}, {LayerSpec::dense("d", 2, 3)}}, 0);
  for (LossKind k : {LossKind::dlr, LossKind::dlr_targeted}) {
    try {
      loss_input_gradient(net, Tensor({2}, 0.5), std::vector<int>{0}, k, std::vector<int>{1});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("unsupported configuration") != std::string::npos);
    }
  }
}

TEST_CASE("trainer separates two linearly separable blobs") {
  const LabeledDataset data = blobs(100, 1);
  Network net = build_network({{2}, {LayerSpec::dense("h", 2, 8), LayerSpec::relu("r"), LayerSpec::dense("o", 8, 2)}},
                              1);
  TrainConfig tc;
  tc.epochs = 30;
  const auto report = train(net, data, tc);
  CHECK(report.final_accuracy >= 0.99);
  CHECK(report.epoch_loss.size() == 30);
  CHECK(report.epoch_accuracy.size() == 30);
  CHECK(evaluate_accuracy(net, data) == doctest::Approx(report.final_accuracy));
}

TEST_CASE("zero epochs leave the network untouched") {
  const LabeledDataset data = blobs(10, 2);
  Network net = build_network({{2}, {LayerSpec::dense("o", 2, 2)}}, 4);
  const Tensor before = net.layers()[0].weight;
  TrainConfig tc;
  tc.epochs = 0;
  const auto report = train(net, data, tc);
  CHECK(report.epoch_loss.empty());
  CHECK(report.epoch_accuracy.empty());
  CHECK(net.layers()[0].weight == before);
}

TEST_CASE("training is deterministic in its seed") {
  const LabeledDataset data = blobs(30, 3);
  const NetworkSpec spec{{2}, {LayerSpec::dense("h", 2, 6), LayerSpec::relu("r"), LayerSpec::dense("o", 6, 2)}};
  TrainConfig tc;
  tc.epochs = 5;
  Network a = build_network(spec, 9), b = build_network(spec, 9);
  const auto ra = train(a, data, tc);
  const auto rb = train(b, data, tc);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(a.layers()[2].weight == b.layers()[2].weight);
  const Tensor probe({1, 2}, std::vector<double>{0.3, 0.6});
  CHECK(forward_capture(a, probe, {}).logits == forward_capture(b, probe, {}).logits);
}

TEST_CASE("a diverging run reports the failing epoch") {
  const LabeledDataset data = blobs(20, 4);
  Network net = build_network({{2}, {LayerSpec::dense("h", 2, 16), LayerSpec::relu("r"), LayerSpec::dense("o", 16, 2)}},
                              0);
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 1e200;
  try {
    train(net, data, tc);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("accuracy counts argmax agreement") {
  const Network net = linear_net({{1, 0}, {0, 1}});
  LabeledDataset d;
  d.num_classes = 2;
  d.images = Tensor({4, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.1, 0.6});
  d.labels = {0, 1, 0, 1};
  CHECK(evaluate_accuracy(net, d) == 1.0);
  d.labels = {1, 0, 1, 0};
  CHECK(evaluate_accuracy(net, d) == 0.0);
  d.labels = {0, 1, 0, 0};
  CHECK(evaluate_accuracy(net, d) == 0.75);
}

TEST_CASE("ties in the logits go to the lowest class index") {
  const Network net = linear_net({{1, 0}, {1, 0}});
  LabeledDataset d;
  d.num_classes = 2;
  d.images = Tensor({1, 2}, std::vector<double>{0.5, 0.5});
  d.labels = {0};
  CHECK(evaluate_accuracy(net, d) == 1.0);
  CHECK(predict_labels(net, d.images) == std::vector<int>{0});
}

TEST_CASE("network files round-trip parameters bit-exactly") {
  std::mt19937_64 rng(8);
  const Network net = oracle::random_network(rng, true);
  const auto path = scratch("net.bin");
  save_network(net, path);
  const Network back = load_network(path);
  REQUIRE(back.layers().size() == net.layers().size());
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    CHECK(back.layers()[k].spec == net.layers()[k].spec);
    CHECK(back.layers()[k].weight == net.layers()[k].weight);
    CHECK(back.layers()[k].bias == net.layers()[k].bias);
  }
  const Tensor x = oracle::random_tensor(rng, net.input_shape(), 0, 1);
  CHECK(predict_logits(back, x.data()) == predict_logits(net, x.data()));
}

TEST_CASE("corrupt files are format errors") {
  const auto path = scratch("bogus.bin");
  std::ofstream(path, std::ios::binary) << "not a network at all";
  CHECK_THROWS_AS(load_network(path), FormatError);
  CHECK_THROWS_AS(load_tensor(path), FormatError);
  CHECK_THROWS_AS(load_dataset(path), FormatError);
}

TEST_CASE("network spec JSON round-trips") {
  const NetworkSpec spec{{1, 8, 8},
                         {LayerSpec::conv2d("c", 1, 4, 3, 1, 1), LayerSpec::relu("r"), LayerSpec::maxpool2d("p", 2),
                          LayerSpec::flatten("f"), LayerSpec::dense("d", 64, 10)}};
  const NetworkSpec back = network_spec_from_json(network_spec_to_json(spec));
  CHECK(back.input_shape == spec.input_shape);
  CHECK(back.layers == spec.layers);
}

TEST_CASE("tensor files round-trip") {
  std::mt19937_64 rng(9);
  const Tensor t = oracle::random_tensor(rng, {2, 3, 4}, -5, 5);
  const auto path = scratch("t.bin");
  save_tensor(t, path);
  CHECK(load_tensor(path) == t);
}

TEST_CASE("synthetic data is deterministic, bounded and balanced") {
  SyntheticSpec s;
  s.samples_per_class = 20;
  const auto a = make_synthetic_dataset(s);
  const auto b = make_synthetic_dataset(s);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 200);
  CHECK(a.images.shape() == Shape{200, 1, 8, 8});
  for (double v : a.images.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.labels[i] == static_cast<int>(i % 10));
  s.sample_seed = 99;
  CHECK_FALSE(make_synthetic_dataset(s).images == a.images);
}

TEST_CASE("dataset validation rejects out-of-range content") {
  LabeledDataset d;
  d.num_classes = 2;
  d.images = Tensor({2, 2}, 0.5);
  d.labels = {0, 1};
  CHECK_NOTHROW(d.validate());
  d.labels = {0, 2};
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.labels = {0};
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.labels = {0, 1};
  d.images[3] = 1.5;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("stratified split keeps class proportions and never overlaps") {
  SyntheticSpec s;
  s.samples_per_class = 30;
  const auto data = make_synthetic_dataset(s);
  const Split sp = stratified_split(data, 5, 100, 50);
  CHECK(sp.validation.size() == 100);
  CHECK(sp.test.size() == 50);
  std::vector<int> val_count(10, 0), test_count(10, 0);
  for (int y : sp.validation.labels) ++val_count[y];
  for (int y : sp.test.labels) ++test_count[y];
  for (int c = 0; c < 10; ++c) {
    CHECK(val_count[c] == 10);
    CHECK(test_count[c] == 5);
  }
  std::vector<std::size_t> all = sp.validation_index;
  all.insert(all.end(), sp.test_index.begin(), sp.test_index.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  for (std::size_t k = 0; k < sp.validation.size(); ++k) {
    CHECK(sp.validation.labels[k] == data.labels[sp.validation_index[k]]);
  }
  const Split again = stratified_split(data, 5, 100, 50);
  CHECK(again.validation_index == sp.validation_index);
  CHECK_FALSE(stratified_split(data, 6, 100, 50).validation_index == sp.validation_index);
  CHECK_THROWS_AS(stratified_split(data, 0, 200, 101), ConfigError);
}

TEST_CASE("uneven splits stay within one sample of the exact share") {
  LabeledDataset d;
  d.num_classes = 3;
  d.images = Tensor({20, 1}, 0.5);
  for (int i = 0; i < 20; ++i) d.labels.push_back(i < 10 ? 0 : (i < 16 ? 1 : 2));
  const Split sp = stratified_split(d, 1, 7, 5);
  const double share[3] = {10.0 / 20, 6.0 / 20, 4.0 / 20};
  std::vector<int> c(3, 0);
  for (int y : sp.validation.labels) ++c[y];
  for (int k = 0; k < 3; ++k) CHECK(std::abs(c[k] - 7 * share[k]) < 1.0);
}

TEST_CASE("dataset files round-trip") {
  SyntheticSpec s;
  s.samples_per_class = 3;
  const auto data = make_synthetic_dataset(s);
  const auto path = scratch("data.bin");
  save_dataset(data, path);
  const auto back = load_dataset(path);
  CHECK(back.images == data.images);
  CHECK(back.labels == data.labels);
  CHECK(back.num_classes == data.num_classes);
}
