#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "padens/corpus.hpp"
#include "padens/image.hpp"
#include "padens/rng.hpp"

namespace padens::testing {

inline Image random_image(Rng& rng, int height, int width) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(height) * width * 3);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng.below(256));
  return Image(height, width, std::move(px));
}

inline Corpus labeled_corpus(Rng& rng, int negative, int benign, int malignant, int min_size = 4, int max_size = 9) {
  Corpus c;
  int k = 0;
  auto add = [&](Label l, int n) {
    for (int i = 0; i < n; ++i) {
      const int h = min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_size - min_size + 1)));
      const int w = min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_size - min_size + 1)));
      char id[16];
      std::snprintf(id, sizeof id, "s%03d", k++);
      c.push_back({id, random_image(rng, h, w), l});
    }
  };
  add(Label::kNegative, negative);
  add(Label::kBenign, benign);
  add(Label::kMalignant, malignant);
  return c;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("padens_" + tag + "_" + std::to_string(Rng(hash_string(tag) ^ reinterpret_cast<std::uintptr_t>(this)).next_u64()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace padens::testing
