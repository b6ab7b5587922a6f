#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advlens/metric.hpp"

namespace advlens {

/// One CSV row: layer,seed,norm,epsilon,loss,n_pairs,metric
struct ReportRow {
  std::string layer;
  std::uint64_t seed = 0;
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  LossKind loss = LossKind::ce;
  std::size_t n_pairs = 0;
  double metric = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct LayerAggregate {
  std::string layer;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single seed
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
};

/// Aggregates successful reports per layer, in order of first appearance.
std::vector<LayerAggregate> aggregate_reports(const std::vector<LayerRobustnessReport>& reports);

/// Failed layers are left out of the CSV.
std::string reports_to_csv(const std::vector<LayerRobustnessReport>& reports);
std::vector<ReportRow> rows_from_csv(std::string_view text);

/// Aggregates plus every per-seed report, including per-pair overlap flags.
nlohmann::json reports_to_json(const std::vector<LayerRobustnessReport>& reports);
std::vector<LayerRobustnessReport> reports_from_json(const nlohmann::json& j);

/// Writes <stem>.csv and <stem>.json; throws FormatError if not writable.
void export_report(const std::vector<LayerRobustnessReport>& reports, const std::filesystem::path& csv_path,
                   const std::filesystem::path& json_path);

}  // namespace advlens
