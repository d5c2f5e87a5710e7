#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "padens/corpus.hpp"
#include "padens/image.hpp"
#include "padens/rng.hpp"

namespace padens {

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

enum class Placement { kCenter, kTopLeft };

std::string to_string(Placement p);
Placement parse_placement(const std::string& text);

struct PaddingSpec {
  int target_height = 0;
  int target_width = 0;
  Rgb fill{255, 255, 255};
  Placement placement = Placement::kCenter;

  bool operator==(const PaddingSpec&) const = default;
};

// Target = the largest height and width seen in the corpus.
PaddingSpec padding_from_stats(const CorpusStats& stats, Rgb fill = {255, 255, 255},
                               Placement placement = Placement::kCenter);

struct Offset {
  int row = 0;
  int col = 0;
  bool operator==(const Offset&) const = default;
};

// Center placement uses floor((target - size) / 2) on each axis.
Offset placement_offset(int height, int width, const PaddingSpec& spec);

Image pad_image(const Image& image, const PaddingSpec& spec);
// Same id and label; padding does not create a new sample.
ImageSample pad_to(const ImageSample& sample, const PaddingSpec& spec);
Corpus pad_all(std::span<const ImageSample> corpus, const PaddingSpec& spec);

Image crop(const Image& image, Offset origin, int height, int width);

// ---------------------------------------------------------------------------
// Photometric jitter
// ---------------------------------------------------------------------------

struct JitterSpec {
  double brightness_delta = 0.2;
  double contrast_delta = 0.2;
  double saturation_delta = 0.2;
  double hue_delta = 0.05;  // fraction of the hue circle, at most 0.5
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const JitterSpec&) const = default;
};

// One realized draw. Factors of 1 and a hue shift of 0 are the identity.
struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
};

// Draws brightness, contrast, saturation, hue in that order.
JitterParams draw_jitter(const JitterSpec& spec, Rng& draw);

// brightness -> contrast -> saturation -> hue, clamping to [0, 255] after
// every step and rounding once at the end.
Image apply_jitter(const Image& image, const JitterParams& params);

std::string jitter_copy_id(const std::string& source_id, int copy_index);

ImageSample apply_jitter(const ImageSample& sample, const JitterSpec& spec, Rng& draw, int copy_index);

// Independent draw stream for one synthetic copy; parallel and sequential
// generation agree because nothing is shared between copies.
Rng jitter_stream(std::uint64_t seed, const JitterSpec& spec, const std::string& source_id, int copy_index);

// ---------------------------------------------------------------------------
// Oversampling
// ---------------------------------------------------------------------------

struct CopySource {
  std::string source_id;
  int copy_index = 0;
  bool operator==(const CopySource&) const = default;
};

struct OversamplePlan {
  std::map<Label, int> additional_copies;
  std::map<Label, std::vector<CopySource>> sources;

  int total_additional() const;
  bool operator==(const OversamplePlan&) const = default;
};

// Tops every class up to the majority count. Copies are spread over the
// class's samples so per-source copy counts differ by at most one; which
// sources receive the extra copy is decided by `seed`.
OversamplePlan plan_oversample(const CorpusStats& stats, std::span<const ImageSample> corpus, std::uint64_t seed);

struct ManifestRow {
  std::string id;
  std::string source_id;
  Label label;
  std::string transform;
  bool operator==(const ManifestRow&) const = default;
};

struct BalancedCorpus {
  Corpus samples;  // originals first (input order), then synthetic copies
  std::vector<ManifestRow> manifest;
};

BalancedCorpus balance_with_manifest(std::span<const ImageSample> corpus, const JitterSpec& jitter,
                                     std::uint64_t seed);
Corpus balance_corpus(std::span<const ImageSample> corpus, const JitterSpec& jitter, std::uint64_t seed);

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Alternative sizing strategies (for comparison runs)
// ---------------------------------------------------------------------------

enum class Sizing { kPad, kResize, kCrop };

std::string to_string(Sizing s);
Sizing parse_sizing(const std::string& text);

// kPad: pad_image. kResize: bilinear resize to the target, aspect ratio not
// kept. kCrop: centered crop to the target; axes already smaller are padded.
Image fit_image(const Image& image, Sizing sizing, const PaddingSpec& target);
Corpus fit_all(std::span<const ImageSample> corpus, Sizing sizing, const PaddingSpec& target);

}  // namespace padens
