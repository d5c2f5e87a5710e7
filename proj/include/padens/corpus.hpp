#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "padens/image.hpp"

namespace padens {

using Corpus = std::vector<ImageSample>;

struct CorpusStats {
  int max_height = 0;
  int max_width = 0;
  int min_height = 0;
  int min_width = 0;
  std::map<Label, int> class_counts;  // labeled samples only
  int total = 0;

  int labeled() const;
  bool operator==(const CorpusStats&) const = default;
};

struct SplitSpec {
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  Corpus train;
  Corpus validation;
};

struct LabelRow {
  std::string id;
  Label label;
};

// Two-column `id,<name>` table with a header row. Rejects duplicate ids and
// labels outside {-1, 0, 1}, naming the offending row.
std::vector<LabelRow> read_label_table(const std::filesystem::path& path);

// Images come from `<root>/images` when that directory exists, else from
// `root` itself. Result is ordered lexicographically by id (file stem).
Corpus load_corpus(const std::filesystem::path& root, const std::optional<std::filesystem::path>& labels_path);

CorpusStats compute_stats(std::span<const ImageSample> corpus);

// Per class, round(count * fraction) samples (clamped to [1, count - 1]) go to
// validation. Both halves keep the input order.
Split stratified_split(std::span<const ImageSample> corpus, const SplitSpec& spec);

nlohmann::json stats_to_json(const CorpusStats& stats);
std::string format_stats(const CorpusStats& stats);

}  // namespace padens
