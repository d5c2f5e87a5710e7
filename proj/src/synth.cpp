#include "padens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "padens/error.hpp"

namespace padens {

namespace fs = std::filesystem;

namespace {

struct Palette {
  std::array<double, 3> tissue;
  std::array<double, 3> nucleus;
  double density;  // nuclei per 100 px^2
};

// Pink / purple / blue nuclei; hues ~60 degrees apart.
Palette palette(Label l) {
  switch (l) {
    case Label::kNegative:
      return {{245, 198, 218}, {225, 120, 165}, 2.0};
    case Label::kBenign:
      return {{222, 196, 240}, {150, 95, 195}, 3.0};
    case Label::kMalignant:
      return {{196, 204, 242}, {70, 95, 185}, 4.0};
  }
  throw ValidationError("invalid label");
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

void SynthSpec::validate() const {
  if (min_size < 1 || max_size < min_size) throw ValidationError("synthetic size range is invalid");
  if (unlabeled < 0) throw ValidationError("unlabeled count must be nonnegative");
  int total = 0;
  for (const auto& [label, n] : counts) {
    if (n < 0) throw ValidationError("class counts must be nonnegative");
    total += n;
  }
  if (total == 0 && unlabeled == 0) throw ValidationError("synthetic corpus would be empty");
  if (unlabeled > 0 && total == 0) throw ValidationError("unlabeled images need a labeled class mix");
}

SynthSpec oxml_shaped_spec(std::uint64_t seed) {
  return {{{Label::kNegative, 36}, {Label::kBenign, 14}, {Label::kMalignant, 12}}, 124, 32, 64, seed};
}

SynthSpec desk_spec(std::uint64_t seed) {
  return {{{Label::kNegative, 30}, {Label::kBenign, 18}, {Label::kMalignant, 12}}, 0, 32, 64, seed};
}

Image synth_image(Label label, int height, int width, Rng& rng) {
  Image img(height, width, Rgb{255, 255, 255});
  const Palette pal = palette(label);
  std::vector<double> buf(static_cast<std::size_t>(height) * width * 3);
  // Tissue: a pale stained field covering a random rectangle of most of the slide.
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, height / 5))));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, width / 5))));
  const int y1 = height - static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, height / 5))));
  const int x1 = width - static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, width / 5))));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double* px = &buf[(static_cast<std::size_t>(y) * width + x) * 3];
      const bool tissue = y >= y0 && y < y1 && x >= x0 && x < x1;
      const std::array<double, 3> base = tissue ? pal.tissue : std::array<double, 3>{252, 252, 252};
      for (int c = 0; c < 3; ++c) px[c] = base[c] + rng.normal() * 4.0;
    }
  }
  const int nuclei = std::max(1, static_cast<int>(std::lround(pal.density * (y1 - y0) * (x1 - x0) / 100.0)));
  for (int k = 0; k < nuclei; ++k) {
    const double cy = rng.uniform(y0, y1);
    const double cx = rng.uniform(x0, x1);
    const double ry = rng.uniform(1.2, 2.8);
    const double rx = rng.uniform(1.2, 2.8);
    const double shade = rng.uniform(-12.0, 12.0);
    for (int y = std::max(0, static_cast<int>(cy - ry)); y <= std::min(height - 1, static_cast<int>(cy + ry)); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - rx)); x <= std::min(width - 1, static_cast<int>(cx + rx)); ++x) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        if (dy * dy + dx * dx > 1.0) continue;
        double* px = &buf[(static_cast<std::size_t>(y) * width + x) * 3];
        for (int c = 0; c < 3; ++c) px[c] = pal.nucleus[c] + shade + rng.normal() * 6.0;
      }
    }
  }
  std::vector<std::uint8_t> bytes(buf.size());
  std::transform(buf.begin(), buf.end(), bytes.begin(), clamp_byte);
  return Image(height, width, std::move(bytes));
}

SynthCorpus make_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x5A17}));
  std::vector<Label> labels;
  for (const auto& [label, n] : spec.counts) labels.insert(labels.end(), n, label);
  rng.shuffle(std::span<Label>(labels));
  // Unlabeled images follow the labeled class proportions.
  std::vector<Label> hidden;
  for (int i = 0; i < spec.unlabeled; ++i) hidden.push_back(labels[rng.below(labels.size())]);

  auto draw = [&](Label label, const std::string& id) {
    const int h = spec.min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_size - spec.min_size + 1)));
    const int w = spec.min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_size - spec.min_size + 1)));
    Rng pixels(derive_seed(spec.seed, {hash_string(id)}));
    return ImageSample{id, synth_image(label, h, w, pixels), label};
  };
  SynthCorpus out;
  char id[32];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(id, sizeof id, "train_%03zu", i);
    out.labeled.push_back(draw(labels[i], id));
  }
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    std::snprintf(id, sizeof id, "test_%03zu", i);
    out.unlabeled.push_back(draw(hidden[i], id));
  }
  return out;
}

void write_synthetic(const SynthCorpus& corpus, const fs::path& root) {
  auto write_part = [](const Corpus& part, const fs::path& dir, const fs::path& labels) {
    fs::create_directories(dir);
    std::ofstream out(labels, std::ios::binary);
    if (!out) throw Error("cannot write " + labels.string());
    out << "id,label\n";
    for (const auto& s : part) {
      write_png(dir / (s.id + ".png"), s.image);
      out << s.id << ',' << label_value(*s.label) << '\n';
    }
  };
  write_part(corpus.labeled, root / "images", root / "labels.csv");
  if (!corpus.unlabeled.empty()) write_part(corpus.unlabeled, root / "test" / "images", root / "test_labels.csv");
}

}  // namespace padens
