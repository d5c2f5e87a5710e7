#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "padens/augment.hpp"
#include "padens/ensemble.hpp"
#include "padens/eval.hpp"
#include "padens/model.hpp"
#include "padens/train.hpp"

namespace padens {

// One declarative document for every CLI command. Defaults reproduce the
// reference regime: five pretrained members, 100 epochs, lr 0.001,
// momentum 0.9.
struct RunConfig {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> labels;  // default <dataset>/labels.csv
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;

  std::optional<int> pad_height;  // overrides for the derived target
  std::optional<int> pad_width;
  Rgb fill{255, 255, 255};
  Placement placement = Placement::kCenter;
  Sizing sizing = Sizing::kPad;

  JitterSpec jitter;  // seed ignored; `seed` above is used
  EnsembleSpec ensemble;
  Averaging averaging = Averaging::kProbability;
  TrainConfig train;  // seed ignored; `seed` above is used
  bool balance = true;

  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  double holdout_fraction = 0.25;

  void validate(const BackboneProvider& provider = default_provider()) const;
  bool operator==(const RunConfig&) const = default;

  std::filesystem::path labels_path() const;
  TrainConfig train_config() const;
  JitterSpec jitter_spec() const;
  PipelineOptions pipeline_options() const;
  HoldoutSpec holdout_spec() const;
};

RunConfig default_run_config(const BackboneProvider& provider = default_provider());

// Unknown keys are rejected at every level; missing keys keep defaults.
RunConfig parse_run_config(const nlohmann::json& doc, const BackboneProvider& provider = default_provider());
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path, const BackboneProvider& provider = default_provider());

// Replaces the member list: `architectures` in order, cycled or truncated
// to `count` when given.
EnsembleSpec make_ensemble(const std::vector<std::string>& architectures, std::optional<int> count, bool pretrained,
                           const BackboneProvider& provider = default_provider());

}  // namespace padens
