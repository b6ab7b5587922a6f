#include "advlens/analysis.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <set>

#include "advlens/error.hpp"
#include "advlens/hash.hpp"
#include "advlens/render.hpp"
#include "advlens/report.hpp"
#include "advlens/serialize.hpp"
#include "advlens/train.hpp"
#include "text_util.hpp"

namespace advlens {

NetworkSpec toy_cnn_spec(const Shape& input_shape, std::size_t num_classes) {
  if (input_shape.size() != 3) throw ConfigError("toy CNN expects [channels, height, width] input");
  const std::size_t c = input_shape[0];
  const std::size_t h = input_shape[1] / 4, w = input_shape[2] / 4;
  return {input_shape,
          {LayerSpec::conv2d("conv1", c, 8, 3, 1, 1), LayerSpec::relu("relu1"), LayerSpec::maxpool2d("pool1", 2),
           LayerSpec::conv2d("conv2", 8, 16, 3, 1, 1), LayerSpec::relu("relu2"), LayerSpec::maxpool2d("pool2", 2),
           LayerSpec::flatten("flatten"), LayerSpec::dense("fc1", 16 * h * w, 32), LayerSpec::relu("relu3"),
           LayerSpec::dense("logits", 32, num_classes)}};
}

void AnalysisConfig::validate(std::size_t dataset_size, std::size_t num_classes) const {
  if (seeds.empty()) throw ConfigError("analysis config: at least one seed is required");
  if (n_validation == 0) throw ConfigError("analysis config: validation split must be non-empty");
  if (n_validation + n_test > dataset_size) {
    throw ConfigError("analysis config: split sizes " + std::to_string(n_validation) + "+" + std::to_string(n_test) +
                      " exceed the " + std::to_string(dataset_size) + " available samples");
  }
  attack.validate(num_classes);
  tsne.validate();
}

nlohmann::json AnalysisConfig::to_json() const {
  nlohmann::json layers = capture_layers.empty() ? nlohmann::json("all") : nlohmann::json(capture_layers);
  return {
      {"dataset", dataset_path.string()},
      {"model", model_path.string()},
      {"seeds", seeds},
      {"split", {{"validation", n_validation}, {"test", n_test}}},
      {"attack",
       {{"norm", to_string(attack.norm)},
        {"epsilon", attack.epsilon},
        {"iterations", attack.iterations},
        {"loss", to_string(attack.loss)},
        {"num_targets", attack.num_targets}}},
      {"tsne",
       {{"perplexity", tsne.perplexity},
        {"iterations", tsne.iterations},
        {"theta", tsne.theta},
        {"learning_rate", tsne.learning_rate},
        {"early_exaggeration", tsne.early_exaggeration},
        {"early_exaggeration_iters", tsne.early_exaggeration_iters},
        {"initial_momentum", tsne.initial_momentum},
        {"final_momentum", tsne.final_momentum},
        {"momentum_switch_iter", tsne.momentum_switch_iter},
        {"kl_every", tsne.kl_every}}},
      {"layers", layers},
      {"output", output_dir.string()},
      {"reuse_embeddings", reuse_embeddings},
      {"render_maps", render_maps},
  };
}

AnalysisConfig AnalysisConfig::from_json(const nlohmann::json& j) {
  AnalysisConfig c;
  try {
    if (j.contains("dataset")) c.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("model")) c.model_path = j.at("model").get<std::string>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("split")) {
      c.n_validation = j["split"].value("validation", c.n_validation);
      c.n_test = j["split"].value("test", c.n_test);
    }
    if (j.contains("attack")) {
      const auto& a = j["attack"];
      if (a.contains("norm")) c.attack.norm = parse_norm(a["norm"].get<std::string>());
      c.attack.epsilon = a.value("epsilon", c.attack.epsilon);
      c.attack.iterations = a.value("iterations", c.attack.iterations);
      if (a.contains("loss")) c.attack.loss = parse_loss_kind(a["loss"].get<std::string>());
      c.attack.num_targets = a.value("num_targets", c.attack.num_targets);
    }
    if (j.contains("tsne")) {
      const auto& t = j["tsne"];
      c.tsne.perplexity = t.value("perplexity", c.tsne.perplexity);
      c.tsne.iterations = t.value("iterations", c.tsne.iterations);
      c.tsne.theta = t.value("theta", c.tsne.theta);
      c.tsne.learning_rate = t.value("learning_rate", c.tsne.learning_rate);
      c.tsne.early_exaggeration = t.value("early_exaggeration", c.tsne.early_exaggeration);
      c.tsne.early_exaggeration_iters = t.value("early_exaggeration_iters", c.tsne.early_exaggeration_iters);
      c.tsne.initial_momentum = t.value("initial_momentum", c.tsne.initial_momentum);
      c.tsne.final_momentum = t.value("final_momentum", c.tsne.final_momentum);
      c.tsne.momentum_switch_iter = t.value("momentum_switch_iter", c.tsne.momentum_switch_iter);
      c.tsne.kl_every = t.value("kl_every", c.tsne.kl_every);
    }
    if (j.contains("layers")) {
      const auto& l = j["layers"];
      if (l.is_string()) {
        if (l.get<std::string>() != "all") throw ConfigError("\"layers\" must be \"all\" or a list of names");
      } else {
        c.capture_layers = l.get<std::vector<std::string>>();
      }
    }
    if (j.contains("output")) c.output_dir = j.at("output").get<std::string>();
    c.reuse_embeddings = j.value("reuse_embeddings", c.reuse_embeddings);
    c.render_maps = j.value("render_maps", c.render_maps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("analysis config: ") + e.what());
  }
  return c;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json seeds_j = nlohmann::json::array();
  for (const auto& s : seeds) {
    seeds_j.push_back({{"seed", s.seed},
                       {"n_validation", s.n_validation},
                       {"n_pairs", s.n_pairs},
                       {"n_misclassified", s.n_misclassified},
                       {"n_successful", s.n_successful},
                       {"clean_accuracy", s.clean_accuracy},
                       {"robust_accuracy", s.robust_accuracy},
                       {"timings", {{"attack_seconds", s.attack_seconds}, {"analysis_seconds", s.analysis_seconds}}}});
  }
  nlohmann::json files_j = nlohmann::json::array();
  for (const auto& f : files) files_j.push_back({{"path", f.path}, {"hash", f.hash}});
  return {{"tool", "advlens"},     {"tool_version", tool_version}, {"config", config},
          {"seeds", seeds_j},      {"files", files_j},             {"failures", failures},
          {"wall_seconds", wall_seconds}};
}

std::vector<std::string> resolve_layers(const Network& net, const std::vector<std::string>& requested) {
  std::vector<std::string> out;
  if (requested.empty()) {
    out.push_back("input");
    for (auto& name : net.layer_names()) out.push_back(name);
    return out;
  }
  bool with_input = false;
  std::vector<std::size_t> idx;
  for (const auto& name : requested) {
    if (name == "input") {
      with_input = true;
    } else {
      idx.push_back(net.layer_index(name));
    }
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  if (with_input) out.push_back("input");
  for (auto k : idx) out.push_back(net.layers()[k].spec.name);
  return out;
}

std::vector<LayerRepresentations> capture_representations(const Network& net, const AdversarialBatch& batch,
                                                          const Tensor& misclassified,
                                                          const std::vector<std::string>& layers) {
  auto with_batch_shape = [&](const Tensor& t) {
    if (t.batch() > 0) return t;
    Shape s{0};
    s.insert(s.end(), net.input_shape().begin(), net.input_shape().end());
    return Tensor(s);
  };
  const auto clean = forward_capture(net, with_batch_shape(batch.clean), layers);
  const auto perturbed = forward_capture(net, with_batch_shape(batch.perturbed), layers);
  const auto mis = forward_capture(net, with_batch_shape(misclassified), layers);
  std::vector<LayerRepresentations> reps;
  for (const auto& name : layers) {
    reps.push_back({name, to_matrix(clean.captures.at(name)), to_matrix(perturbed.captures.at(name)),
                    to_matrix(mis.captures.at(name))});
  }
  return reps;
}

namespace {

std::string tsne_key(const TsneConfig& t) {
  return nlohmann::json{{"perplexity", t.perplexity},
                        {"iterations", t.iterations},
                        {"theta", t.theta},
                        {"learning_rate", t.learning_rate},
                        {"early_exaggeration", t.early_exaggeration},
                        {"early_exaggeration_iters", t.early_exaggeration_iters},
                        {"initial_momentum", t.initial_momentum},
                        {"final_momentum", t.final_momentum},
                        {"momentum_switch_iter", t.momentum_switch_iter},
                        {"kl_every", t.kl_every},
                        {"seed", t.seed}}
      .dump();
}

// Embeddings keyed by (seed, layer, attack, t-SNE config, representation bytes).
EmbedFn cached_embedder(const std::filesystem::path& cache_dir, bool reuse, std::uint64_t seed,
                        const AttackConfig& attack) {
  return [=](const std::string& layer, const Matrix& X, const TsneConfig& config) {
    const std::string ident = std::to_string(seed) + "|" + layer + "|" + to_string(attack.norm) + "|" +
                              text::format_double(attack.epsilon) + "|" + to_string(attack.loss) + "|" +
                              std::to_string(attack.iterations) + "|" + tsne_key(config);
    std::uint64_t h = fnv1a64(ident);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(X.data()), X.size() * sizeof(double)), h);
    const auto path = cache_dir / (hex64(h) + ".json");
    if (reuse && std::filesystem::exists(path)) {
      try {
        const auto j = nlohmann::json::parse(text::read_file(path));
        TsneResult r;
        const auto pts = j.at("Y").get<std::vector<std::array<double, 2>>>();
        if (static_cast<Eigen::Index>(pts.size()) == X.rows()) {
          r.Y.resize(X.rows(), 2);
          for (std::size_t i = 0; i < pts.size(); ++i) {
            r.Y(i, 0) = pts[i][0];
            r.Y(i, 1) = pts[i][1];
          }
          r.kl_trace = j.at("kl_trace").get<std::vector<double>>();
          r.kl_iterations = j.at("kl_iterations").get<std::vector<std::size_t>>();
          r.perplexity = j.at("perplexity").get<double>();
          r.warnings = j.at("warnings").get<std::vector<std::string>>();
          return r;
        }
      } catch (const std::exception&) {
        // unreadable cache entry: recompute below
      }
    }
    TsneResult r = tsne_embed(X, config);
    std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(r.Y.rows()));
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {r.Y(i, 0), r.Y(i, 1)};
    const nlohmann::json j{{"layer", layer},          {"Y", pts},
                           {"kl_trace", r.kl_trace},   {"kl_iterations", r.kl_iterations},
                           {"perplexity", r.perplexity}, {"warnings", r.warnings}};
    text::write_file(path, j.dump());
    return r;
  };
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return out;
}

}  // namespace

RunManifest run_analysis(const AnalysisConfig& config, const Network& net, const LabeledDataset& data) {
  const auto t_start = std::chrono::steady_clock::now();
  data.validate();
  config.validate(data.size(), net.num_classes());
  const auto layers = resolve_layers(net, config.capture_layers);
  const auto& out = config.output_dir;
  std::filesystem::create_directories(out);

  RunManifest manifest;
  manifest.config = config.to_json();
  manifest.tool_version = ADVLENS_VERSION;
  std::vector<std::filesystem::path> written;

  nlohmann::json accuracy = nlohmann::json::array();
  for (const auto seed : config.seeds) {
    const auto t_seed = std::chrono::steady_clock::now();
    const auto seed_dir = out / ("seed_" + std::to_string(seed));
    const Split split = stratified_split(data, seed, config.n_validation, config.n_test);
    const LabeledDataset& val = split.validation;

    SeedSummary summary;
    summary.seed = seed;
    summary.n_validation = val.size();
    summary.clean_accuracy = evaluate_accuracy(net, val);

    AttackConfig attack = config.attack;
    attack.seed = seed;
    const AdversarialBatch batch = attack_dataset(net, val, attack);
    summary.robust_accuracy = robust_accuracy(net, val, batch);
    summary.n_pairs = batch.size();
    summary.n_successful = static_cast<std::size_t>(std::count(batch.success.begin(), batch.success.end(), true));
    save_adversarial_batch(batch, seed_dir / "adversarial");
    for (const char* f : {"clean.bin", "perturbed.bin", "metadata.json"}) written.push_back(seed_dir / "adversarial" / f);
    summary.attack_seconds = seconds_since(t_seed);

    const auto pred = predict_labels(net, val.images);
    std::vector<std::size_t> mis_idx;
    std::vector<int> mis_labels;
    for (std::size_t i = 0; i < val.size(); ++i) {
      if (pred[i] != val.labels[i]) {
        mis_idx.push_back(i);
        mis_labels.push_back(val.labels[i]);
      }
    }
    summary.n_misclassified = mis_idx.size();
    const Tensor mis_images = gather(val.images, mis_idx);

    const auto t_layers = std::chrono::steady_clock::now();
    const auto reps = capture_representations(net, batch, mis_images, layers);
    TsneConfig tsne = config.tsne;
    tsne.seed = seed;
    const MetricContext ctx{seed, attack.norm, attack.epsilon, attack.loss};
    const auto analyses = per_layer_metrics(reps, batch.labels, mis_labels, tsne, ctx,
                                            cached_embedder(out / "cache" / "embeddings", config.reuse_embeddings,
                                                            seed, attack));
    std::vector<LayerRobustnessReport> seed_reports;
    for (const auto& a : analyses) {
      seed_reports.push_back(a.report);
      if (!a.report.ok) {
        manifest.failures.push_back("seed " + std::to_string(seed) + " layer " + a.report.layer + ": " + a.report.error);
        continue;
      }
      const std::string stem = safe_name(a.report.layer);
      const auto csv = seed_dir / "embeddings" / (stem + ".csv");
      write_embedding_csv(a.map, csv);
      written.push_back(csv);
      if (config.render_maps) {
        const std::string title = a.report.layer + " (seed " + std::to_string(seed) + ", metric " +
                                  text::format_double(a.report.metric) + ")";
        struct Variant {
          ShowFilter show;
          ColorBy color;
          const char* suffix;
        };
        for (const Variant v : {Variant{ShowFilter::all, ColorBy::role, "_role"},
                                Variant{ShowFilter::all, ColorBy::label, "_label"},
                                Variant{ShowFilter::non_overlapping, ColorBy::role, "_nonoverlap"}}) {
          RenderOptions ro;
          ro.show = v.show;
          ro.color_by = v.color;
          ro.title = title;
          const auto svg = seed_dir / "maps" / (stem + v.suffix + ".svg");
          text::write_file(svg, render_map(a.map, ro, a.report.per_pair_overlap));
          written.push_back(svg);
        }
      }
    }
    text::write_file(seed_dir / "report.json", reports_to_json(seed_reports).dump(2) + "\n");
    written.push_back(seed_dir / "report.json");
    summary.analysis_seconds = seconds_since(t_layers);

    manifest.reports.insert(manifest.reports.end(), seed_reports.begin(), seed_reports.end());
    manifest.seeds.push_back(summary);
    accuracy.push_back({{"seed", seed},
                        {"n_validation", summary.n_validation},
                        {"n_pairs", summary.n_pairs},
                        {"n_misclassified", summary.n_misclassified},
                        {"n_successful", summary.n_successful},
                        {"clean_accuracy", summary.clean_accuracy},
                        {"robust_accuracy", summary.robust_accuracy}});
  }

  if (manifest.reports.empty()) throw ConfigError("run_analysis: no layers analysed");
  export_report(manifest.reports, out / "reports.csv", out / "reports.json");
  written.push_back(out / "reports.csv");
  written.push_back(out / "reports.json");

  double clean_sum = 0.0, robust_sum = 0.0;
  for (const auto& s : manifest.seeds) {
    clean_sum += s.clean_accuracy;
    robust_sum += s.robust_accuracy;
  }
  const double ns = static_cast<double>(manifest.seeds.size());
  const nlohmann::json acc{{"attack",
                            {{"norm", to_string(config.attack.norm)},
                             {"epsilon", config.attack.epsilon},
                             {"loss", to_string(config.attack.loss)},
                             {"iterations", config.attack.iterations}}},
                           {"mean_clean_accuracy", clean_sum / ns},
                           {"mean_robust_accuracy", robust_sum / ns},
                           {"seeds", accuracy}};
  text::write_file(out / "accuracy.json", acc.dump(2) + "\n");
  written.push_back(out / "accuracy.json");

  for (const auto& p : written) {
    manifest.files.push_back({std::filesystem::relative(p, out).generic_string(), hash_file(p)});
  }
  manifest.wall_seconds = seconds_since(t_start);
  text::write_file(out / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

RunManifest run_analysis(const AnalysisConfig& config) {
  const Network net = load_network(config.model_path);
  const LabeledDataset data = load_dataset(config.dataset_path);
  return run_analysis(config, net, data);
}

EpsilonCalibration calibrate_epsilon(const Network& net, const LabeledDataset& data, const AttackConfig& base,
                                     const std::vector<double>& grid, double target) {
  EpsilonCalibration cal;
  for (double eps : grid) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    const auto batch = attack_dataset(net, data, cfg);
    const double acc = robust_accuracy(net, data, batch);
    cal.sweep.emplace_back(eps, acc);
    cal.epsilon = eps;
    cal.robust_accuracy = acc;
    if (acc <= target) {
      cal.reached = true;
      break;
    }
  }
  return cal;
}

}  // namespace advlens
