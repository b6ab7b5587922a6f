#include "advlens/embedding_map.hpp"

#include <map>

#include "advlens/error.hpp"
#include "text_util.hpp"

namespace advlens {

std::string to_string(PointRole role) {
  switch (role) {
    case PointRole::clean_paired: return "clean-paired";
    case PointRole::perturbed: return "perturbed";
    case PointRole::clean_misclassified: return "clean-misclassified";
  }
  return "?";
}

PointRole parse_point_role(std::string_view text) {
  for (auto r : {PointRole::clean_paired, PointRole::perturbed, PointRole::clean_misclassified}) {
    if (text == to_string(r)) return r;
  }
  throw FormatError("unknown point role '" + std::string(text) + "'");
}

void EmbeddingMap::validate() const {
  std::map<std::size_t, std::pair<int, int>> pairs;  // clean count, perturbed count
  for (const auto& p : points) {
    if (p.role == PointRole::clean_misclassified) {
      if (p.pair_index) throw ConfigError("clean-misclassified point carries a pair index");
      continue;
    }
    if (!p.pair_index) throw ConfigError(to_string(p.role) + " point without a pair index");
    auto& slot = pairs[*p.pair_index];
    (p.role == PointRole::clean_paired ? slot.first : slot.second)++;
  }
  for (const auto& [idx, counts] : pairs) {
    if (counts.first != 1 || counts.second != 1) {
      throw ConfigError("pair " + std::to_string(idx) + " does not have exactly one clean and one perturbed point");
    }
  }
}

std::size_t EmbeddingMap::n_pairs() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.role == PointRole::clean_paired;
  return n;
}

std::string to_csv(const EmbeddingMap& map) {
  std::string out = "pair_index,role,true_label,x,y\n";
  for (const auto& p : map.points) {
    if (p.pair_index) out += std::to_string(*p.pair_index);
    out += ',' + to_string(p.role) + ',' + std::to_string(p.label) + ',' + text::format_double(p.x) + ',' +
           text::format_double(p.y) + '\n';
  }
  return out;
}

EmbeddingMap embedding_map_from_csv(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty() || rows[0] != "pair_index,role,true_label,x,y") {
    throw FormatError("embedding CSV must start with header pair_index,role,true_label,x,y");
  }
  EmbeddingMap map;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cols = text::split(rows[r], ',');
    if (cols.size() != 5) throw FormatError("embedding CSV row " + std::to_string(r) + " has wrong column count");
    EmbeddingPoint p;
    if (!cols[0].empty()) p.pair_index = text::parse_int<std::size_t>(cols[0]);
    p.role = parse_point_role(cols[1]);
    p.label = text::parse_int<int>(cols[2]);
    p.x = text::parse_double(cols[3]);
    p.y = text::parse_double(cols[4]);
    map.points.push_back(p);
  }
  return map;
}

void write_embedding_csv(const EmbeddingMap& map, const std::filesystem::path& path) {
  text::write_file(path, to_csv(map));
}

EmbeddingMap read_embedding_csv(const std::filesystem::path& path) {
  return embedding_map_from_csv(text::read_file(path));
}

}  // namespace advlens
