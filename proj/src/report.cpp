#include "advlens/report.hpp"

#include <algorithm>
#include <cmath>

#include "advlens/error.hpp"
#include "text_util.hpp"

namespace advlens {

std::vector<LayerAggregate> aggregate_reports(const std::vector<LayerRobustnessReport>& reports) {
  std::vector<LayerAggregate> out;
  for (const auto& r : reports) {
    if (!r.ok) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& a) { return a.layer == r.layer; });
    if (it == out.end()) {
      out.push_back({r.layer, 0.0, 0.0, {}, {}});
      it = out.end() - 1;
    }
    it->seeds.push_back(r.seed);
    it->values.push_back(r.metric);
  }
  for (auto& a : out) {
    const double n = static_cast<double>(a.values.size());
    double sum = 0.0;
    for (double v : a.values) sum += v;
    a.mean = sum / n;
    double ss = 0.0;
    for (double v : a.values) ss += (v - a.mean) * (v - a.mean);
    a.std = a.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return out;
}

namespace {
constexpr std::string_view kCsvHeader = "layer,seed,norm,epsilon,loss,n_pairs,metric";
}

std::string reports_to_csv(const std::vector<LayerRobustnessReport>& reports) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : reports) {
    if (!r.ok) continue;
    out += r.layer + ',' + std::to_string(r.seed) + ',' + to_string(r.norm) + ',' + text::format_double(r.epsilon) +
           ',' + to_string(r.loss) + ',' + std::to_string(r.n_pairs) + ',' + text::format_double(r.metric) + '\n';
  }
  return out;
}

std::vector<ReportRow> rows_from_csv(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty() || rows[0] != kCsvHeader) throw FormatError("report CSV must start with header " + std::string(kCsvHeader));
  std::vector<ReportRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = text::split(rows[i], ',');
    if (c.size() != 7) throw FormatError("report CSV row " + std::to_string(i) + " has wrong column count");
    out.push_back({std::string(c[0]), text::parse_int<std::uint64_t>(c[1]), parse_norm(c[2]),
                   text::parse_double(c[3]), parse_loss_kind(c[4]), text::parse_int<std::size_t>(c[5]),
                   text::parse_double(c[6])});
  }
  return out;
}

nlohmann::json reports_to_json(const std::vector<LayerRobustnessReport>& reports) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& a : aggregate_reports(reports)) {
    layers.push_back({{"layer", a.layer}, {"mean", a.mean}, {"std", a.std}, {"seeds", a.seeds}, {"values", a.values}});
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j{{"layer", r.layer},     {"seed", r.seed},       {"norm", to_string(r.norm)},
                     {"epsilon", r.epsilon}, {"loss", to_string(r.loss)}, {"n_pairs", r.n_pairs},
                     {"ok", r.ok}};
    if (r.ok) {
      j["metric"] = r.metric;
      j["per_pair_overlap"] = r.per_pair_overlap;
    } else {
      j["error"] = r.error;
    }
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    runs.push_back(std::move(j));
  }
  return {{"format_version", 1}, {"layers", layers}, {"reports", runs}};
}

std::vector<LayerRobustnessReport> reports_from_json(const nlohmann::json& j) {
  std::vector<LayerRobustnessReport> out;
  for (const auto& rj : j.at("reports")) {
    LayerRobustnessReport r;
    r.layer = rj.at("layer").get<std::string>();
    r.seed = rj.at("seed").get<std::uint64_t>();
    r.norm = parse_norm(rj.at("norm").get<std::string>());
    r.epsilon = rj.at("epsilon").get<double>();
    r.loss = parse_loss_kind(rj.at("loss").get<std::string>());
    r.n_pairs = rj.at("n_pairs").get<std::size_t>();
    r.ok = rj.at("ok").get<bool>();
    if (r.ok) {
      r.metric = rj.at("metric").get<double>();
      r.per_pair_overlap = rj.at("per_pair_overlap").get<std::vector<bool>>();
    } else {
      r.error = rj.value("error", std::string{});
      r.metric = std::nan("");
    }
    r.warnings = rj.value("warnings", std::vector<std::string>{});
    out.push_back(std::move(r));
  }
  return out;
}

void export_report(const std::vector<LayerRobustnessReport>& reports, const std::filesystem::path& csv_path,
                   const std::filesystem::path& json_path) {
  if (reports.empty()) throw ConfigError("export_report: no reports");
  text::write_file(csv_path, reports_to_csv(reports));
  text::write_file(json_path, reports_to_json(reports).dump(2) + "\n");
}

}  // namespace advlens
