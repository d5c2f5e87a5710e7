#include "padens/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "padens/error.hpp"
#include "padens/rng.hpp"

namespace padens {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

int CorpusStats::labeled() const {
  int n = 0;
  for (const auto& [_, c] : class_counts) n += c;
  return n;
}

std::vector<LabelRow> read_label_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open label table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("label table " + path.string() + " has no header row");
  if (trim(line.substr(0, line.find(','))) != "id" || line.find(',') == std::string::npos)
    throw ValidationError("label table " + path.string() + " must start with an `id,<label>` header");
  std::vector<LabelRow> rows;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected `id,label`");
    std::string id = trim(line.substr(0, comma));
    std::string value = trim(line.substr(comma + 1));
    auto label = parse_label(value);
    if (!label) throw ValidationError("label row for '" + id + "' has invalid label " + value);
    if (!seen.insert(id).second) throw ValidationError("duplicate id '" + id + "' in " + path.string());
    rows.push_back({std::move(id), *label});
  }
  return rows;
}

Corpus load_corpus(const fs::path& root, const std::optional<fs::path>& labels_path) {
  if (!fs::is_directory(root)) throw ValidationError("dataset directory not found: " + root.string());
  const fs::path images_dir = fs::is_directory(root / "images") ? root / "images" : root;

  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    std::string id = entry.path().stem().string();
    if (!files.emplace(id, entry.path()).second)
      throw ValidationError("two image files share the id '" + id + "'");
  }

  std::unordered_map<std::string, Label> labels;
  if (labels_path) {
    for (auto& row : read_label_table(*labels_path)) {
      if (!files.count(row.id)) throw ValidationError("label row references missing image '" + row.id + "'");
      labels.emplace(row.id, row.label);
    }
  }

  Corpus corpus;
  corpus.reserve(files.size());
  for (const auto& [id, path] : files) {
    ImageSample sample;
    sample.id = id;
    try {
      sample.image = read_image(path);
    } catch (const Error& e) {
      throw Error("unreadable image '" + id + "': " + e.what());
    }
    if (auto it = labels.find(id); it != labels.end()) sample.label = it->second;
    corpus.push_back(std::move(sample));
  }
  return corpus;
}

CorpusStats compute_stats(std::span<const ImageSample> corpus) {
  if (corpus.empty()) throw ValidationError("cannot compute statistics of an empty corpus");
  CorpusStats stats;
  stats.min_height = corpus.front().image.height();
  stats.min_width = corpus.front().image.width();
  for (const auto& s : corpus) {
    stats.max_height = std::max(stats.max_height, s.image.height());
    stats.max_width = std::max(stats.max_width, s.image.width());
    stats.min_height = std::min(stats.min_height, s.image.height());
    stats.min_width = std::min(stats.min_width, s.image.width());
    if (s.label) ++stats.class_counts[*s.label];
  }
  stats.total = static_cast<int>(corpus.size());
  return stats;
}

Split stratified_split(std::span<const ImageSample> corpus, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
    throw ValidationError("validation fraction must lie in (0, 1)");
  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].label) throw ValidationError("cannot split unlabeled sample '" + corpus[i].id + "'");
    by_class[*corpus[i].label].push_back(i);
  }
  auto take_count = [&](std::size_t n) {
    const auto raw = static_cast<std::size_t>(std::lround(static_cast<double>(n) * spec.validation_fraction));
    return std::clamp<std::size_t>(raw, 1, n - 1);
  };

  std::vector<bool> to_validation(corpus.size(), false);
  if (spec.stratified) {
    for (auto& [label, indices] : by_class) {
      if (indices.size() < 2)
        throw ValidationError("class " + to_string(label) + " has fewer than 2 samples; cannot split");
      Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(label_value(label) + 1)}));
      rng.shuffle(std::span<std::size_t>(indices));
      const std::size_t k = take_count(indices.size());
      for (std::size_t j = 0; j < k; ++j) to_validation[indices[j]] = true;
    }
  } else {
    if (corpus.size() < 2) throw ValidationError("need at least 2 samples to split");
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng rng(derive_seed(spec.seed, {0xA11}));
    rng.shuffle(std::span<std::size_t>(all));
    const std::size_t k = take_count(all.size());
    for (std::size_t j = 0; j < k; ++j) to_validation[all[j]] = true;
  }

  Split split;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (to_validation[i] ? split.validation : split.train).push_back(corpus[i]);
  return split;
}

nlohmann::json stats_to_json(const CorpusStats& stats) {
  nlohmann::json counts = nlohmann::json::object();
  for (Label l : kAllLabels) {
    auto it = stats.class_counts.find(l);
    counts[to_string(l)] = it == stats.class_counts.end() ? 0 : it->second;
  }
  return {{"max_height", stats.max_height}, {"max_width", stats.max_width}, {"min_height", stats.min_height},
          {"min_width", stats.min_width},   {"total", stats.total},         {"labeled", stats.labeled()},
          {"class_counts", counts}};
}

std::string format_stats(const CorpusStats& stats) {
  std::ostringstream os;
  os << "images:        " << stats.total << " (" << stats.labeled() << " labeled)\n";
  os << "largest size:  " << stats.max_height << " x " << stats.max_width << " (h x w)\n";
  os << "smallest size: " << stats.min_height << " x " << stats.min_width << " (h x w)\n";
  os << "class counts:\n";
  for (Label l : kAllLabels) {
    auto it = stats.class_counts.find(l);
    os << "  " << (label_value(l) >= 0 ? " " : "") << to_string(l) << ": "
       << (it == stats.class_counts.end() ? 0 : it->second) << '\n';
  }
  return os.str();
}

}  // namespace padens
