#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "advlens/analysis.hpp"
#include "advlens/error.hpp"
#include "advlens/hash.hpp"
#include "advlens/render.hpp"
#include "advlens/report.hpp"
#include "advlens/serialize.hpp"
#include "advlens/train.hpp"

namespace fs = std::filesystem;
using namespace advlens;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string norm, loss, layers;
  std::optional<double> eps;
  std::string out = "advlens_out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "single seed, replaces the configured seed list");
  cmd->add_option("--norm", c.norm, "threat model")->check(CLI::IsMember({"l2", "linf"}));
  cmd->add_option("--eps", c.eps, "perturbation budget")->check(CLI::NonNegativeNumber);
  cmd->add_option("--loss", c.loss, "attack objective")->check(CLI::IsMember({"ce", "dlr", "dlr-t"}));
  cmd->add_option("--layers", c.layers, "comma-separated layer names or 'all'");
  cmd->add_option("--out", c.out, "output directory");
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  out << text;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// File config first, then command-line overrides.
struct Settings {
  json file = json::object();
  AnalysisConfig analysis;
};

Settings load_settings(const Common& c) {
  Settings s;
  if (!c.config_path.empty()) s.file = read_json(c.config_path);
  s.analysis = AnalysisConfig::from_json(s.file);
  if (c.seed) s.analysis.seeds = {*c.seed};
  if (!c.norm.empty()) s.analysis.attack.norm = parse_norm(c.norm);
  if (c.eps) s.analysis.attack.epsilon = *c.eps;
  if (!c.loss.empty()) s.analysis.attack.loss = parse_loss_kind(c.loss);
  if (!c.layers.empty()) s.analysis.capture_layers = c.layers == "all" ? std::vector<std::string>{} : split_csv(c.layers);
  s.analysis.output_dir = c.out;
  return s;
}

SyntheticSpec synthetic_spec(const json& j) {
  SyntheticSpec s;
  if (!j.is_object()) return s;
  s.num_classes = j.value("classes", s.num_classes);
  s.channels = j.value("channels", s.channels);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.signal = j.value("signal", s.signal);
  s.noise = j.value("noise", s.noise);
  s.noise_smoothing = j.value("noise_smoothing", s.noise_smoothing);
  s.blobs_per_class = j.value("blobs_per_class", s.blobs_per_class);
  s.prototype_seed = j.value("prototype_seed", s.prototype_seed);
  s.sample_seed = j.value("sample_seed", s.sample_seed);
  return s;
}

TrainConfig train_config(const json& j) {
  TrainConfig t;
  if (!j.is_object()) return t;
  t.epochs = j.value("epochs", t.epochs);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.momentum = j.value("momentum", t.momentum);
  t.seed = j.value("seed", t.seed);
  return t;
}

// Manifest for the single-step subcommands: effective config and file hashes.
class StepManifest {
 public:
  StepManifest(std::string command, json config, fs::path out)
      : out_(std::move(out)), start_(std::chrono::steady_clock::now()) {
    m_.config = {{"command", std::move(command)}, {"settings", std::move(config)}};
    m_.tool_version = ADVLENS_VERSION;
  }
  void add(const fs::path& p) { m_.files.push_back({fs::relative(p, out_).generic_string(), hash_file(p)}); }
  RunManifest& manifest() { return m_; }
  void write() {
    m_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text(out_ / "manifest.json", m_.to_json().dump(2) + "\n");
  }

 private:
  RunManifest m_;
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
};

LabeledDataset dataset_for(const Settings& s, const std::string& data_path) {
  if (!data_path.empty()) return load_dataset(data_path);
  if (!s.analysis.dataset_path.empty()) return load_dataset(s.analysis.dataset_path);
  return make_synthetic_dataset(synthetic_spec(s.file.value("synthetic", json::object())));
}

Network model_for(const Settings& s, const std::string& model_path) {
  const fs::path p = !model_path.empty() ? fs::path(model_path) : s.analysis.model_path;
  if (p.empty()) throw ConfigError("no model given (use --model or the config's \"model\" key)");
  return load_network(p);
}

int cmd_train(const Common& c, const std::string& data_path) {
  const Settings s = load_settings(c);
  const LabeledDataset data = dataset_for(s, data_path);
  data.validate();
  const fs::path out = c.out;
  fs::create_directories(out);
  TrainConfig tc = train_config(s.file.value("train", json::object()));
  if (c.seed) tc.seed = *c.seed;
  Network net = build_network(toy_cnn_spec(data.images.sample_shape(), data.num_classes), tc.seed);
  const TrainingReport rep = train(net, data, tc);

  StepManifest m("train", s.file, out);
  save_network(net, out / "model.bin");
  m.add(out / "model.bin");
  save_dataset(data, out / "dataset.bin");
  m.add(out / "dataset.bin");
  const json report{{"epochs", tc.epochs},
                    {"learning_rate", tc.learning_rate},
                    {"batch_size", tc.batch_size},
                    {"momentum", tc.momentum},
                    {"seed", tc.seed},
                    {"epoch_loss", rep.epoch_loss},
                    {"epoch_accuracy", rep.epoch_accuracy},
                    {"final_accuracy", rep.final_accuracy}};
  write_text(out / "training.json", report.dump(2) + "\n");
  m.add(out / "training.json");
  m.write();
  std::printf("trained on %zu samples, training accuracy %.4f\n", data.size(), rep.final_accuracy);
  return 0;
}

int cmd_attack(const Common& c, const std::string& model_path, const std::string& data_path) {
  const Settings s = load_settings(c);
  const Network net = model_for(s, model_path);
  const LabeledDataset data = dataset_for(s, data_path);
  const fs::path out = c.out;
  StepManifest m("attack", s.analysis.to_json(), out);
  json per_seed = json::array();
  for (auto seed : s.analysis.seeds) {
    const Split split = stratified_split(data, seed, s.analysis.n_validation, 0);
    AttackConfig ac = s.analysis.attack;
    ac.seed = seed;
    const auto batch = attack_dataset(net, split.validation, ac);
    const double clean = evaluate_accuracy(net, split.validation);
    const double robust = robust_accuracy(net, split.validation, batch);
    const fs::path dir = out / ("seed_" + std::to_string(seed)) / "adversarial";
    save_adversarial_batch(batch, dir);
    for (const char* f : {"clean.bin", "perturbed.bin", "metadata.json"}) m.add(dir / f);
    per_seed.push_back({{"seed", seed}, {"clean_accuracy", clean}, {"robust_accuracy", robust}, {"n_pairs", batch.size()}});
    std::printf("seed %llu: clean %.4f robust %.4f (%zu pairs)\n", static_cast<unsigned long long>(seed), clean, robust,
                batch.size());
  }
  write_text(out / "accuracy.json", json{{"seeds", per_seed}}.dump(2) + "\n");
  m.add(out / "accuracy.json");
  m.write();
  return 0;
}

int cmd_embed(const Common& c, const std::string& model_path, const std::string& adv_dir) {
  const Settings s = load_settings(c);
  const Network net = model_for(s, model_path);
  const AdversarialBatch batch = load_adversarial_batch(adv_dir);
  const auto layers = resolve_layers(net, s.analysis.capture_layers);
  Shape empty{0};
  empty.insert(empty.end(), net.input_shape().begin(), net.input_shape().end());
  const auto reps = capture_representations(net, batch, Tensor(empty), layers);
  TsneConfig tc = s.analysis.tsne;
  tc.seed = s.analysis.seeds.front();
  const fs::path out = c.out;
  StepManifest m("embed", s.analysis.to_json(), out);
  const MetricContext ctx{tc.seed, batch.config.norm, batch.config.epsilon, batch.config.loss};
  for (const auto& a : per_layer_metrics(reps, batch.labels, {}, tc, ctx)) {
    if (!a.report.ok) {
      m.manifest().failures.push_back(a.report.layer + ": " + a.report.error);
      std::fprintf(stderr, "layer %s failed: %s\n", a.report.layer.c_str(), a.report.error.c_str());
      continue;
    }
    const fs::path csv = out / "embeddings" / (a.report.layer + ".csv");
    write_embedding_csv(a.map, csv);
    m.add(csv);
    std::printf("%s: %zu pairs embedded\n", a.report.layer.c_str(), a.report.n_pairs);
  }
  m.write();
  return m.manifest().failures.empty() ? 0 : 1;
}

int cmd_metric(const Common& c, const std::vector<std::string>& csvs) {
  const Settings s = load_settings(c);
  const fs::path out = c.out;
  StepManifest m("metric", s.analysis.to_json(), out);
  std::vector<LayerRobustnessReport> reports;
  for (const auto& path : csvs) {
    const EmbeddingMap map = read_embedding_csv(path);
    const OverlapInputs in = overlap_inputs(map);
    LayerRobustnessReport r;
    r.layer = fs::path(path).stem().string();
    r.seed = s.analysis.seeds.front();
    r.norm = s.analysis.attack.norm;
    r.epsilon = s.analysis.attack.epsilon;
    r.loss = s.analysis.attack.loss;
    r.n_pairs = in.size();
    r.per_pair_overlap = overlap_flags(in);
    r.metric = robustness_metric(in);
    std::printf("%s: metric %.6f over %zu pairs\n", r.layer.c_str(), r.metric, r.n_pairs);
    reports.push_back(std::move(r));
  }
  fs::create_directories(out);
  export_report(reports, out / "reports.csv", out / "reports.json");
  m.add(out / "reports.csv");
  m.add(out / "reports.json");
  m.manifest().reports = reports;
  m.write();
  return 0;
}

int cmd_render(const Common& c, const std::string& csv, const std::string& show, const std::string& color_by,
               const std::string& title) {
  const Settings s = load_settings(c);
  const EmbeddingMap map = read_embedding_csv(csv);
  RenderOptions o;
  o.show = parse_show_filter(show);
  o.color_by = parse_color_by(color_by);
  o.title = title.empty() ? fs::path(csv).stem().string() : title;
  const fs::path out = c.out;
  const fs::path svg = out / (fs::path(csv).stem().string() + "_" + show + "_" + color_by + ".svg");
  write_text(svg, render_map(map, o, overlap_flags(overlap_inputs(map))));
  StepManifest m("render", s.analysis.to_json(), out);
  m.add(svg);
  m.write();
  std::printf("wrote %s\n", svg.string().c_str());
  return 0;
}

int cmd_run(const Common& c) {
  const Settings s = load_settings(c);
  const RunManifest m = run_analysis(s.analysis);
  for (const auto& a : aggregate_reports(m.reports)) {
    std::printf("%-10s mean %.4f std %.4f over %zu seeds\n", a.layer.c_str(), a.mean, a.std, a.values.size());
  }
  for (const auto& f : m.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layerwise adversarial-robustness analysis for small image classifiers"};
  app.set_version_flag("--version", ADVLENS_VERSION);
  app.require_subcommand(1);

  Common train_c, attack_c, embed_c, metric_c, run_c, render_c;
  std::string data, model, adversarial, embedding, show = "all", color_by = "role", title;
  std::vector<std::string> embeddings;

  auto* train = app.add_subcommand("train", "train the toy CNN on a dataset (synthetic by default)");
  add_common(train, train_c);
  train->add_option("--data", data, "dataset file; omitted = synthetic data from the config");

  auto* attack = app.add_subcommand("attack", "attack the validation split of each seed");
  add_common(attack, attack_c);
  attack->add_option("--model", model, "model file");
  attack->add_option("--data", data, "dataset file");

  auto* embed = app.add_subcommand("embed", "joint t-SNE of clean and perturbed captures per layer");
  add_common(embed, embed_c);
  embed->add_option("--model", model, "model file");
  embed->add_option("--adversarial", adversarial, "directory written by 'attack'")->required();

  auto* metric = app.add_subcommand("metric", "overlap metric of embedding CSV files");
  add_common(metric, metric_c);
  metric->add_option("embeddings", embeddings, "embedding CSV files")->required();

  auto* run = app.add_subcommand("run", "full pipeline over every configured seed");
  add_common(run, run_c);

  auto* render = app.add_subcommand("render", "SVG scatter plot of an embedding CSV");
  add_common(render, render_c);
  render->add_option("embedding", embedding, "embedding CSV file")->required();
  render->add_option("--show", show, "all or non-overlapping")->check(CLI::IsMember({"all", "non-overlapping"}));
  render->add_option("--color-by", color_by, "role or label")->check(CLI::IsMember({"role", "label"}));
  render->add_option("--title", title, "plot title");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_c, data);
    if (*attack) return cmd_attack(attack_c, model, data);
    if (*embed) return cmd_embed(embed_c, model, adversarial);
    if (*metric) return cmd_metric(metric_c, embeddings);
    if (*run) return cmd_run(run_c);
    if (*render) return cmd_render(render_c, embedding, show, color_by, title);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
