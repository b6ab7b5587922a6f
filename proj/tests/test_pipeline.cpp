#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "advlens/analysis.hpp"
#include "advlens/error.hpp"
#include "advlens/hash.hpp"
#include "advlens/render.hpp"
#include "advlens/report.hpp"
#include "advlens/serialize.hpp"
#include "advlens/train.hpp"

using namespace advlens;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::current_path() / "pipeline_work" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LayerRobustnessReport report(std::string layer, std::uint64_t seed, double metric, bool ok = true) {
  LayerRobustnessReport r;
  r.layer = std::move(layer);
  r.seed = seed;
  r.metric = metric;
  r.ok = ok;
  r.n_pairs = 4;
  r.epsilon = 0.03;
  r.per_pair_overlap = {true, false, true, true};
  if (!ok) r.error = "boom";
  return r;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

struct Fixture {
  LabeledDataset data;
  Network net;
};

// Small 4-class problem and a toy CNN trained on it; built once.
const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 60;
    Fixture out{make_synthetic_dataset(spec), build_network(toy_cnn_spec({1, 8, 8}, 4), 3)};
    TrainConfig tc;
    tc.epochs = 15;
    train(out.net, out.data, tc);
    return out;
  }();
  return f;
}

AnalysisConfig small_config(const fs::path& out) {
  AnalysisConfig c;
  c.seeds = {0, 1};
  c.n_validation = 40;
  c.n_test = 40;
  c.attack.epsilon = 0.06;
  c.attack.iterations = 10;
  c.tsne.perplexity = 10;
  c.tsne.iterations = 300;
  c.tsne.learning_rate = 50;
  c.capture_layers = {"input", "relu1", "logits"};
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("toy CNN has the documented layer names and output size") {
  const Network net = build_network(toy_cnn_spec({1, 8, 8}, 4), 0);
  CHECK(net.layer_names() == std::vector<std::string>{"conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "flatten",
                                                      "fc1", "relu3", "logits"});
  CHECK(net.num_classes() == 4);
  CHECK_THROWS_AS(toy_cnn_spec({8, 8}, 4), ConfigError);
}

TEST_CASE("layer resolution follows network order") {
  const Network net = build_network(toy_cnn_spec({1, 8, 8}, 4), 0);
  const auto all = resolve_layers(net, {});
  REQUIRE(all.size() == 11);
  CHECK(all.front() == "input");
  CHECK(all.back() == "logits");
  CHECK(resolve_layers(net, {"logits", "input", "relu1", "logits"}) ==
        std::vector<std::string>{"input", "relu1", "logits"});
  CHECK_THROWS_AS(resolve_layers(net, {"nope"}), ConfigError);
}

TEST_CASE("analysis config survives a JSON round trip") {
  AnalysisConfig c;
  c.dataset_path = "d.bin";
  c.model_path = "m.bin";
  c.seeds = {4, 7};
  c.n_validation = 11;
  c.n_test = 5;
  c.attack.norm = Norm::l2;
  c.attack.epsilon = 0.5;
  c.attack.loss = LossKind::dlr_targeted;
  c.attack.num_targets = 3;
  c.tsne.perplexity = 12;
  c.tsne.theta = 0.25;
  c.capture_layers = {"relu1"};
  c.output_dir = "out";
  c.reuse_embeddings = false;
  const auto back = AnalysisConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.seeds == c.seeds);
  CHECK(back.attack.norm == Norm::l2);
  CHECK(back.attack.loss == LossKind::dlr_targeted);
  CHECK(back.capture_layers == c.capture_layers);
  CHECK_FALSE(back.reuse_embeddings);
}

TEST_CASE("analysis config defaults and rejects malformed input") {
  const auto d = AnalysisConfig::from_json(nlohmann::json::object());
  CHECK(d.seeds.size() == 10);
  CHECK(d.tsne.perplexity == 50);
  CHECK(d.tsne.iterations == 1500);
  CHECK(d.tsne.theta == 0.5);
  CHECK(d.capture_layers.empty());
  CHECK(AnalysisConfig::from_json({{"layers", "all"}}).capture_layers.empty());
  CHECK_THROWS_AS(AnalysisConfig::from_json({{"seeds", "x"}}), ConfigError);
  CHECK_THROWS_AS(AnalysisConfig::from_json({{"attack", {{"norm", "l1"}}}}), ConfigError);
  CHECK_THROWS_AS(AnalysisConfig::from_json({{"attack", {{"loss", "hinge"}}}}), ConfigError);
  AnalysisConfig c;
  CHECK_THROWS_AS(c.validate(300, 10), ConfigError);
  CHECK_NOTHROW(c.validate(400, 10));
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(400, 10), ConfigError);
}

TEST_CASE("aggregation uses the sample standard deviation and skips failures") {
  const std::vector<LayerRobustnessReport> rs{report("a", 0, 0.2), report("b", 0, 0.5), report("a", 1, 0.4),
                                              report("a", 2, 0.9), report("b", 1, 0.0, false)};
  const auto agg = aggregate_reports(rs);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].layer == "a");
  CHECK(agg[0].mean == doctest::Approx(0.5).epsilon(1e-15));
  const double ss = 0.09 + 0.01 + 0.16;
  CHECK(agg[0].std == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-14));
  CHECK(agg[0].seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(agg[1].values == std::vector<double>{0.5});
  CHECK(agg[1].std == 0.0);
}

TEST_CASE("report CSV and JSON round trip") {
  const std::vector<LayerRobustnessReport> rs{report("a", 0, 0.1), report("b", 3, 1.0 / 3.0),
                                              report("c", 1, 0.0, false)};
  const std::string csv = reports_to_csv(rs);
  CHECK(csv.rfind("layer,seed,norm,epsilon,loss,n_pairs,metric\n", 0) == 0);
  const auto rows = rows_from_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].layer == "b");
  CHECK(rows[1].seed == 3);
  CHECK(rows[1].metric == 1.0 / 3.0);
  CHECK(rows[1].epsilon == 0.03);
  CHECK_THROWS_AS(rows_from_csv("bad\n"), FormatError);
  CHECK_THROWS_AS(rows_from_csv("layer,seed,norm,epsilon,loss,n_pairs,metric\na,1\n"), FormatError);

  const auto j = reports_to_json(rs);
  const auto back = reports_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.size() == 3);
  CHECK(back[0].per_pair_overlap == rs[0].per_pair_overlap);
  CHECK(back[1].metric == rs[1].metric);
  CHECK_FALSE(back[2].ok);
  CHECK(back[2].error == "boom");
  CHECK(j["layers"].size() == 2);
}

TEST_CASE("export writes both files") {
  const auto dir = fresh_dir("export");
  export_report({report("a", 0, 0.5)}, dir / "r.csv", dir / "r.json");
  CHECK(rows_from_csv(slurp(dir / "r.csv")).size() == 1);
  CHECK(reports_from_json(nlohmann::json::parse(slurp(dir / "r.json"))).size() == 1);
  CHECK_THROWS_AS(export_report({}, dir / "x.csv", dir / "x.json"), ConfigError);
}

TEST_CASE("FNV-1a matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(hex64(0xabcull) == "0000000000000abc");
}

TEST_CASE("rendered markers sit where an independent transform puts them") {
  EmbeddingMap m;
  m.points = {{-2, 1, PointRole::clean_paired, 0, 0}, {2, 3, PointRole::perturbed, 0, 0},
              {0, -1, PointRole::clean_paired, 1, 1}, {1, 1, PointRole::perturbed, 1, 1},
              {0.5, 2, PointRole::clean_misclassified, 2, {}}};
  RenderOptions o;
  o.title = "a < b";
  const std::string svg = render_map(m, o);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("a &lt; b") != std::string::npos);
  CHECK(count(svg, "class=\"marker\"") == 5);
  CHECK(count(svg, "class=\"legend-entry\"") == 3);

  // Plot area [48, 422] x [48, 592], y up, data box [-2,2] x [-1,3].
  const std::regex circle("cx=\"([-0-9.]+)\" cy=\"([-0-9.]+)\"");
  std::vector<std::pair<double, double>> centres;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circle); it != std::sregex_iterator(); ++it) {
    centres.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
  }
  REQUIRE(centres.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const double ex = 48.0 + (m.points[i].x + 2.0) / 4.0 * (422.0 - 48.0);
    const double ey = 592.0 - (m.points[i].y + 1.0) / 4.0 * (592.0 - 48.0);
    CHECK(centres[i].first == doctest::Approx(ex).epsilon(1e-5));
    CHECK(centres[i].second == doctest::Approx(ey).epsilon(1e-5));
  }
  CHECK(count(svg, "fill=\"#2ca02c\" fill-opacity") == 2);
  CHECK(count(svg, "fill=\"#d62728\" fill-opacity") == 2);
}

TEST_CASE("non-overlapping view keeps only the flagged-out pairs") {
  EmbeddingMap m;
  m.points = {{0, 0, PointRole::clean_paired, 0, 0}, {1, 0, PointRole::perturbed, 0, 0},
              {0, 1, PointRole::clean_paired, 1, 1}, {1, 1, PointRole::perturbed, 1, 1},
              {3, 3, PointRole::clean_misclassified, 1, {}}};
  RenderOptions o;
  o.show = ShowFilter::non_overlapping;
  const std::string svg = render_map(m, o, {true, false});
  CHECK(count(svg, "class=\"marker\"") == 2);
  CHECK(count(svg, "data-label=\"1\"") == 2);
  CHECK(count(svg, "class=\"legend-entry\"") == 2);

  o.show = ShowFilter::all;
  o.color_by = ColorBy::label;
  const std::string by_label = render_map(m, o);
  CHECK(count(by_label, "class=\"legend-entry\"") == 2);
  CHECK(count(by_label, "fill=\"none\"") == 2);
  CHECK_THROWS_AS(parse_show_filter("some"), ConfigError);
  CHECK(parse_color_by("label") == ColorBy::label);
}

TEST_CASE("a single-point map renders in the middle of the plot area") {
  EmbeddingMap m;
  m.points = {{5, 5, PointRole::clean_misclassified, 0, {}}};
  const auto t = ViewTransform::fit(m, RenderOptions{});
  CHECK(t.to_x(5) == doctest::Approx(0.5 * (48.0 + 422.0)));
  CHECK(t.to_y(5) == doctest::Approx(0.5 * (48.0 + 592.0)));
}

TEST_CASE("captured representations have one row per sample") {
  const auto& f = fixture();
  const auto split = stratified_split(f.data, 0, 20, 0);
  AttackConfig ac;
  ac.epsilon = 0.05;
  ac.iterations = 5;
  const auto batch = attack_dataset(f.net, split.validation, ac);
  const auto reps = capture_representations(f.net, batch, Tensor({0, 1, 8, 8}), {"input", "pool1", "logits"});
  REQUIRE(reps.size() == 3);
  CHECK(reps[0].clean.rows() == static_cast<Eigen::Index>(batch.size()));
  CHECK(reps[0].clean.cols() == 64);
  CHECK(reps[1].perturbed.cols() == 8 * 4 * 4);
  CHECK(reps[2].misclassified.rows() == 0);
  CHECK(reps[2].clean.cols() == 4);
  for (Eigen::Index k = 0; k < 64; ++k) CHECK(reps[0].clean(0, k) == batch.clean[k]);
}

TEST_CASE("epsilon calibration stops at the first grid value meeting the target") {
  const auto& f = fixture();
  const auto split = stratified_split(f.data, 1, 30, 0);
  AttackConfig ac;
  ac.iterations = 10;
  const auto cal = calibrate_epsilon(f.net, split.validation, ac, {0.0, 0.02, 0.08, 0.3, 0.5}, 0.3);
  REQUIRE_FALSE(cal.sweep.empty());
  CHECK(cal.sweep.front().second == evaluate_accuracy(f.net, split.validation));
  if (cal.reached) {
    CHECK(cal.robust_accuracy <= 0.3);
    for (std::size_t i = 0; i + 1 < cal.sweep.size(); ++i) CHECK(cal.sweep[i].second > 0.3);
    CHECK(cal.epsilon == cal.sweep.back().first);
  }
  CHECK(calibrate_epsilon(f.net, split.validation, ac, {0.0}, -1.0).reached == false);
}

TEST_CASE("a small run writes every artefact and reruns identically") {
  const auto& f = fixture();
  const auto a = fresh_dir("run_a"), b = fresh_dir("run_b");
  const RunManifest ma = run_analysis(small_config(a), f.net, f.data);
  const RunManifest mb = run_analysis(small_config(b), f.net, f.data);
  CHECK(ma.failures.empty());
  CHECK(ma.reports.size() == 6);
  CHECK(ma.seeds.size() == 2);
  for (const char* file : {"reports.csv", "reports.json", "accuracy.json", "manifest.json", "seed_0/report.json",
                           "seed_1/embeddings/relu1.csv", "seed_0/maps/logits_role.svg",
                           "seed_0/maps/input_nonoverlap.svg", "seed_1/adversarial/metadata.json"}) {
    CHECK_MESSAGE(fs::exists(a / file), file);
  }
  for (const char* file : {"reports.csv", "reports.json", "accuracy.json", "seed_0/embeddings/input.csv",
                           "seed_1/embeddings/logits.csv", "seed_1/report.json"}) {
    CHECK_MESSAGE(slurp(a / file) == slurp(b / file), file);
  }
  const auto rows = rows_from_csv(slurp(a / "reports.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].layer == "input");
  CHECK(rows[2].layer == "logits");
  CHECK(rows[3].seed == 1);

  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["config"] == small_config(a).to_json());
  for (const auto& rec : manifest["files"]) {
    CHECK(hash_file(a / rec["path"].get<std::string>()) == rec["hash"].get<std::string>());
  }
  const auto acc = nlohmann::json::parse(slurp(a / "accuracy.json"));
  CHECK(acc["seeds"].size() == 2);
  CHECK(acc["seeds"][0]["clean_accuracy"].get<double>() == ma.seeds[0].clean_accuracy);
  CHECK(ma.seeds[0].robust_accuracy <= ma.seeds[0].clean_accuracy);
  CHECK(ma.seeds[0].n_pairs + ma.seeds[0].n_misclassified == ma.seeds[0].n_validation);

  const auto map = read_embedding_csv(a / "seed_0" / "embeddings" / "relu1.csv");
  CHECK(map.n_pairs() == ma.seeds[0].n_pairs);
  CHECK(robustness_metric(overlap_inputs(map)) == ma.reports[1].metric);
}

TEST_CASE("cached embeddings are reused when present") {
  const auto& f = fixture();
  const auto dir = fresh_dir("cache");
  auto cfg = small_config(dir);
  cfg.seeds = {0};
  cfg.render_maps = false;
  run_analysis(cfg, f.net, f.data);
  const std::string first = slurp(dir / "reports.csv");
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir / "cache" / "embeddings")) entries.push_back(e.path());
  CHECK(entries.size() == 3);

  // Collapse every cached map to one point: if it is read back, no pair overlaps.
  for (const auto& p : entries) {
    auto j = nlohmann::json::parse(slurp(p));
    for (auto& pt : j["Y"]) pt = {0.0, 0.0};
    std::ofstream(p) << j.dump();
  }
  run_analysis(cfg, f.net, f.data);
  for (const auto& row : rows_from_csv(slurp(dir / "reports.csv"))) CHECK(row.metric == 0.0);

  cfg.reuse_embeddings = false;
  run_analysis(cfg, f.net, f.data);
  CHECK(slurp(dir / "reports.csv") == first);
}

TEST_CASE("a zero budget leaves accuracy and every layer unchanged") {
  const auto& f = fixture();
  const auto dir = fresh_dir("zero");
  auto cfg = small_config(dir);
  cfg.attack.epsilon = 0.0;
  cfg.render_maps = false;
  const auto m = run_analysis(cfg, f.net, f.data);
  for (const auto& s : m.seeds) CHECK(s.robust_accuracy == s.clean_accuracy);
  for (const auto& r : m.reports) {
    CHECK(r.ok);
    CHECK(r.metric == 1.0);
  }
}

TEST_CASE("a failing layer is recorded while the run completes") {
  const auto& f = fixture();
  const auto dir = fresh_dir("fail");
  auto cfg = small_config(dir);
  cfg.seeds = {0};
  cfg.render_maps = false;
  cfg.tsne.iterations = 1;
  cfg.tsne.early_exaggeration_iters = 0;
  cfg.tsne.momentum_switch_iter = 0;
  cfg.tsne.learning_rate = 1e300;
  const auto m = run_analysis(cfg, f.net, f.data);
  CHECK(m.failures.size() == 3);
  for (const auto& r : m.reports) CHECK_FALSE(r.ok);
  CHECK(slurp(dir / "reports.csv") == "layer,seed,norm,epsilon,loss,n_pairs,metric\n");
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK_FALSE(fs::exists(dir / "seed_0" / "embeddings" / "relu1.csv"));
}

TEST_CASE("run_analysis loads model and data from disk") {
  const auto& f = fixture();
  const auto dir = fresh_dir("disk");
  save_network(f.net, dir / "model.bin");
  save_dataset(f.data, dir / "data.bin");
  auto cfg = small_config(dir / "out");
  cfg.seeds = {0};
  cfg.render_maps = false;
  cfg.model_path = dir / "model.bin";
  cfg.dataset_path = dir / "data.bin";
  const auto m = run_analysis(cfg);
  CHECK(m.reports.size() == 3);
  cfg.model_path = dir / "missing.bin";
  CHECK_THROWS_AS(run_analysis(cfg), FormatError);
}
