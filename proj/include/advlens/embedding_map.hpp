#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace advlens {

enum class PointRole { clean_paired, perturbed, clean_misclassified };

std::string to_string(PointRole role);
PointRole parse_point_role(std::string_view text);

struct EmbeddingPoint {
  double x = 0.0;
  double y = 0.0;
  PointRole role = PointRole::clean_paired;
  int label = 0;
  std::optional<std::size_t> pair_index;  // links clean-paired <-> perturbed

  friend bool operator==(const EmbeddingPoint&, const EmbeddingPoint&) = default;
};

struct EmbeddingMap {
  std::vector<EmbeddingPoint> points;

  /// Every clean-paired point has exactly one perturbed partner with the same
  /// pair index and vice versa; misclassified points carry no pair index.
  void validate() const;
  std::size_t n_pairs() const;
};

/// CSV columns: pair_index,role,true_label,x,y. pair_index is empty for
/// clean-misclassified points. Coordinates use shortest round-trip formatting.
std::string to_csv(const EmbeddingMap& map);
EmbeddingMap embedding_map_from_csv(std::string_view text);
void write_embedding_csv(const EmbeddingMap& map, const std::filesystem::path& path);
EmbeddingMap read_embedding_csv(const std::filesystem::path& path);

}  // namespace advlens
