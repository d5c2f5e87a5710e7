#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "padens/corpus.hpp"
#include "padens/image.hpp"
#include "padens/rng.hpp"

namespace padens {

// Stain-like synthetic slides: white background, pale tissue and nuclei
// whose hue depends on the class, so the classes are separable by color.
struct SynthSpec {
  std::map<Label, int> counts;
  int unlabeled = 0;  // extra images drawn from the same class mix, written without labels
  int min_size = 32;
  int max_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

// 36/14/12 labeled plus 124 unlabeled.
SynthSpec oxml_shaped_spec(std::uint64_t seed);
// 30/18/12, no unlabeled part.
SynthSpec desk_spec(std::uint64_t seed);

Image synth_image(Label label, int height, int width, Rng& rng);

struct SynthCorpus {
  Corpus labeled;
  Corpus unlabeled;  // labels kept here for scoring but never written next to the images
};

SynthCorpus make_synthetic(const SynthSpec& spec);

// <root>/images/*.png + <root>/labels.csv; unlabeled images go to
// <root>/test/images with their hidden labels in <root>/test_labels.csv.
void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& root);

}  // namespace padens
