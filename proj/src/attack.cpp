#include "advlens/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "advlens/error.hpp"
#include "advlens/parallel.hpp"
#include "advlens/serialize.hpp"
#include "advlens/train.hpp"

namespace advlens {

std::string to_string(Norm norm) { return norm == Norm::l2 ? "l2" : "linf"; }

Norm parse_norm(std::string_view text) {
  if (text == "l2" || text == "L2") return Norm::l2;
  if (text == "linf" || text == "Linf" || text == "inf") return Norm::linf;
  throw ConfigError("unknown norm '" + std::string(text) + "' (expected l2, linf)");
}

void AttackConfig::validate(std::size_t num_classes) const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be >= 0");
  if (iterations == 0) throw ConfigError("attack iterations must be >= 1");
  if (num_targets == 0) throw ConfigError("attack num_targets must be >= 1");
  if (loss != LossKind::ce && num_classes < 4) {
    throw ConfigError("unsupported configuration: " + to_string(loss) + " needs at least 4 classes, model has " +
                      std::to_string(num_classes));
  }
}

double perturbation_norm(Norm norm, std::span<const double> x, std::span<const double> x0) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x[i] - x0[i]);
    acc = norm == Norm::linf ? std::max(acc, d) : acc + d * d;
  }
  return norm == Norm::linf ? acc : std::sqrt(acc);
}

void project_ball(std::span<double> x, std::span<const double> x0, Norm norm, double eps) {
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], x0[i] - eps, x0[i] + eps);
  } else {
    const double n = perturbation_norm(Norm::l2, x, x0);
    if (n > eps) {
      const double s = eps / n;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0[i] + (x[i] - x0[i]) * s;
    }
  }
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

Tensor project_ball(const Tensor& x, const Tensor& x0, Norm norm, double eps) {
  if (x.shape() != x0.shape()) throw ConfigError("project_ball: shape mismatch");
  Tensor out = x;
  project_ball(out.data(), x0.data(), norm, eps);
  return out;
}

namespace {

constexpr double kMomentum = 0.75;
constexpr double kImprovementFraction = 0.75;

// Iteration indices at which the step size may be halved.
std::vector<std::size_t> checkpoints(std::size_t iterations) {
  std::vector<std::size_t> w;
  double prev = 0.0, cur = 0.22;
  while (cur <= 1.0) {
    const auto k = static_cast<std::size_t>(std::ceil(cur * static_cast<double>(iterations) - 1e-9));
    if (k >= 1 && k <= iterations && (w.empty() || k > w.back())) w.push_back(k);
    const double next = cur + std::max(cur - prev - 0.03, 0.06);
    prev = cur;
    cur = next;
  }
  return w;
}

void ascent_direction(Norm norm, std::span<const double> grad, std::span<double> dir) {
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < grad.size(); ++i) dir[i] = (grad[i] > 0.0) - (grad[i] < 0.0);
    return;
  }
  double n = 0.0;
  for (double g : grad) n += g * g;
  n = std::sqrt(n);
  for (std::size_t i = 0; i < grad.size(); ++i) dir[i] = n > 0.0 ? grad[i] / n : 0.0;
}

AttackResult apgd_run(const Network& net, std::span<const double> x0, int label, const AttackConfig& cfg,
                      LossKind kind, int target) {
  const std::size_t d = x0.size();
  Workspace ws;
  auto eval = [&](std::span<const double> x, std::span<double> g) {
    const double f = loss_input_gradient(net, x, label, kind, target, g, ws);
    if (!std::isfinite(f)) throw NumericError("non-finite attack loss");
    return f;
  };

  AttackResult r;
  r.target = target;
  r.loss_trace.reserve(cfg.iterations + 1);

  std::vector<double> x(x0.begin(), x0.end()), x_prev = x, grad(d), dir(d), z(d), next(d);
  std::vector<double> grad_best(d);
  double f = eval(x, grad);
  r.loss_trace.push_back(f);
  r.x_best = x;
  r.best_loss = f;
  grad_best = grad;

  double eta = 2.0 * cfg.epsilon;
  const auto marks = checkpoints(cfg.iterations);
  std::size_t mark = 0, last_mark = 0, improved = 0;
  double eta_at_last_mark = eta, best_at_last_mark = f;

  for (std::size_t k = 1; k <= cfg.iterations; ++k) {
    ascent_direction(cfg.norm, grad, dir);
    for (std::size_t i = 0; i < d; ++i) z[i] = x[i] + eta * dir[i];
    project_ball(z, x0, cfg.norm, cfg.epsilon);
    if (k == 1) {
      next = z;
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        next[i] = x[i] + kMomentum * (z[i] - x[i]) + (1.0 - kMomentum) * (x[i] - x_prev[i]);
      }
      project_ball(next, x0, cfg.norm, cfg.epsilon);
    }
    x_prev = x;
    x = next;
    const double f_new = eval(x, grad);
    r.loss_trace.push_back(f_new);
    if (f_new > f) ++improved;
    f = f_new;
    if (f_new > r.best_loss) {
      r.best_loss = f_new;
      r.x_best = x;
      grad_best = grad;
    }

    if (mark < marks.size() && k == marks[mark]) {
      const std::size_t span = k - last_mark;
      const bool oscillating = static_cast<double>(improved) < kImprovementFraction * static_cast<double>(span);
      const bool stalled = eta_at_last_mark == eta && best_at_last_mark == r.best_loss;
      eta_at_last_mark = eta;
      best_at_last_mark = r.best_loss;
      if (oscillating || stalled) {
        eta *= 0.5;
        x = r.x_best;
        grad = grad_best;
        f = r.best_loss;
      }
      improved = 0;
      last_mark = k;
      ++mark;
    }
  }

  const auto logits = predict_logits(net, r.x_best);
  r.predicted = argmax(logits);
  r.success = r.predicted != label;
  return r;
}

}  // namespace

AttackResult apgd_attack(const Network& net, std::span<const double> x0, int label, const AttackConfig& config) {
  if (config.loss == LossKind::dlr_targeted) {
    throw ConfigError("apgd_attack runs untargeted losses; use apgd_targeted for dlr-t");
  }
  config.validate(net.num_classes());
  return apgd_run(net, x0, label, config, config.loss, -1);
}

AttackResult apgd_targeted(const Network& net, std::span<const double> x0, int label, const AttackConfig& config) {
  AttackConfig cfg = config;
  cfg.loss = LossKind::dlr_targeted;
  cfg.validate(net.num_classes());
  const auto logits = predict_logits(net, x0);
  std::vector<int> others;
  for (int c = 0; c < static_cast<int>(logits.size()); ++c) {
    if (c != label) others.push_back(c);
  }
  std::stable_sort(others.begin(), others.end(), [&](int a, int b) { return logits[a] > logits[b]; });
  const std::size_t n_targets = std::min(cfg.num_targets, others.size());

  AttackResult best;
  bool have = false;
  for (std::size_t t = 0; t < n_targets; ++t) {
    AttackResult r = apgd_run(net, x0, label, cfg, LossKind::dlr_targeted, others[t]);
    if (r.success) return r;
    if (!have || r.best_loss > best.best_loss) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

AttackResult run_attack(const Network& net, std::span<const double> x0, int label, const AttackConfig& config) {
  return config.loss == LossKind::dlr_targeted ? apgd_targeted(net, x0, label, config)
                                               : apgd_attack(net, x0, label, config);
}

AdversarialBatch attack_dataset(const Network& net, const LabeledDataset& data, const AttackConfig& config) {
  config.validate(net.num_classes());
  const auto predicted = predict_labels(net, data.images);
  AdversarialBatch batch;
  batch.config = config;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predicted[i] == data.labels[i]) batch.source_index.push_back(i);
  }
  const std::size_t n = batch.source_index.size();
  batch.clean = gather(data.images, batch.source_index);
  batch.perturbed = batch.clean;
  batch.labels.resize(n);
  std::vector<char> success(n, 0);
  for (std::size_t k = 0; k < n; ++k) batch.labels[k] = data.labels[batch.source_index[k]];
  parallel_for(n, [&](std::size_t k) {
    const auto r = run_attack(net, batch.clean.sample(k), batch.labels[k], config);
    std::copy(r.x_best.begin(), r.x_best.end(), batch.perturbed.sample(k).begin());
    success[k] = r.success;
  });
  batch.success.assign(success.begin(), success.end());
  return batch;
}

double robust_accuracy(const Network& net, const LabeledDataset& data, const AdversarialBatch& batch) {
  if (data.size() == 0) throw ConfigError("robust_accuracy: empty dataset");
  const auto predicted = predict_labels(net, data.images);
  std::vector<char> correct(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) correct[i] = predicted[i] == data.labels[i];
  if (batch.size() > 0) {
    const auto adv = predict_labels(net, batch.perturbed);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t i = batch.source_index.at(k);
      if (i >= data.size()) throw ConfigError("adversarial batch index outside dataset");
      correct[i] = correct[i] && adv[k] == data.labels[i];
    }
  }
  return static_cast<double>(std::count(correct.begin(), correct.end(), 1)) / static_cast<double>(data.size());
}

void save_adversarial_batch(const AdversarialBatch& batch, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(batch.clean, dir / "clean.bin");
  save_tensor(batch.perturbed, dir / "perturbed.bin");
  nlohmann::json meta{
      {"format_version", 1},
      {"norm", to_string(batch.config.norm)},
      {"epsilon", batch.config.epsilon},
      {"iterations", batch.config.iterations},
      {"loss", to_string(batch.config.loss)},
      {"num_targets", batch.config.num_targets},
      {"seed", batch.config.seed},
      {"n_pairs", batch.size()},
      {"labels", batch.labels},
      {"success", batch.success},
      {"source_index", batch.source_index},
  };
  std::ofstream os(dir / "metadata.json");
  os << meta.dump(2) << '\n';
  if (!os) throw FormatError("failed writing '" + (dir / "metadata.json").string() + "'");
}

AdversarialBatch load_adversarial_batch(const std::filesystem::path& dir) {
  std::ifstream is(dir / "metadata.json");
  if (!is) throw FormatError("cannot open '" + (dir / "metadata.json").string() + "'");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad adversarial metadata: ") + e.what());
  }
  AdversarialBatch batch;
  batch.config.norm = parse_norm(meta.at("norm").get<std::string>());
  batch.config.epsilon = meta.at("epsilon").get<double>();
  batch.config.iterations = meta.at("iterations").get<std::size_t>();
  batch.config.loss = parse_loss_kind(meta.at("loss").get<std::string>());
  batch.config.num_targets = meta.at("num_targets").get<std::size_t>();
  batch.config.seed = meta.at("seed").get<std::uint64_t>();
  batch.labels = meta.at("labels").get<std::vector<int>>();
  batch.success = meta.at("success").get<std::vector<bool>>();
  batch.source_index = meta.at("source_index").get<std::vector<std::size_t>>();
  batch.clean = load_tensor(dir / "clean.bin");
  batch.perturbed = load_tensor(dir / "perturbed.bin");
  const std::size_t n = batch.labels.size();
  if (batch.success.size() != n || batch.source_index.size() != n || batch.clean.batch() != n ||
      batch.perturbed.shape() != batch.clean.shape()) {
    throw FormatError("inconsistent adversarial batch in '" + dir.string() + "'");
  }
  return batch;
}

}  // namespace advlens
