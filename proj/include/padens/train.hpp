#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "padens/archive.hpp"
#include "padens/augment.hpp"
#include "padens/corpus.hpp"
#include "padens/model.hpp"

namespace padens {

enum class SelectionMode { kValidationLoss, kTrainingLoss };

std::string to_string(SelectionMode m);
SelectionMode parse_selection_mode(const std::string& text);  // accepts val/validation_loss, train/training_loss

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.001;
  double momentum = 0.9;
  int batch_size = 8;
  std::uint64_t seed = 0;
  SelectionMode selection_mode = SelectionMode::kValidationLoss;
  double validation_fraction = 0.2;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);

// How member inputs were produced; predict-time inputs must match.
struct InputSpec {
  PaddingSpec target;
  Sizing sizing = Sizing::kPad;
  bool operator==(const InputSpec&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int member_index = 0;
  BackboneSpec spec;
  int num_classes = kNumClasses;
  std::vector<NamedTensor> parameters;
  double best_loss = 0.0;
  int best_epoch = 0;
  // Score column i holds the class label_mapping[i].
  std::array<int, kNumClasses> label_mapping{-1, 0, 1};
  InputSpec input;
  SelectionMode selection_mode = SelectionMode::kValidationLoss;
  std::string config_fingerprint;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws CheckpointError on version mismatch, missing fingerprint or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the member's classifier and loads the saved parameters.
Classifier restore_classifier(const Checkpoint& checkpoint, const BackboneProvider& provider = default_provider());

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double selection_loss = 0.0;
};

struct BestEpoch {
  double loss = 0.0;
  int epoch = 0;  // 1-based
};

// Smallest loss, earliest epoch on ties.
BestEpoch select_earliest_minimum(std::span<const double> losses);

// Replaces the default per-epoch selection loss (tests inject sequences here).
using SelectionLossFn = std::function<double(Classifier& classifier, int epoch, double train_epoch_loss)>;

struct MemberInfo {
  int member_index = 0;
  InputSpec input;
  std::string fingerprint;
};

struct MemberResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  double initial_train_loss = 0.0;  // before the first update, evaluation mode
};

// Mean cross-entropy over the samples in evaluation mode.
double mean_loss(Classifier& classifier, std::span<const ImageSample> samples, int batch_size);

// Mini-batch SGD with momentum on mean cross-entropy for config.epochs epochs,
// reshuffling every epoch. The returned checkpoint holds the parameters of the
// epoch with the lowest selection loss, and the classifier is left holding
// those parameters.
MemberResult train_member(Classifier& classifier, std::span<const ImageSample> train_set,
                          std::span<const ImageSample> val_set, const TrainConfig& config, const MemberInfo& info,
                          const SelectionLossFn& selection_loss = {});

struct PipelineOptions {
  // Explicit target; otherwise derived from the labeled corpus (largest size
  // for pad/resize, smallest for crop).
  std::optional<PaddingSpec> target;
  Rgb fill{255, 255, 255};
  Placement placement = Placement::kCenter;
  Sizing sizing = Sizing::kPad;
  bool balance = true;
};

InputSpec resolve_input_spec(const CorpusStats& stats, const PipelineOptions& options);

std::string config_fingerprint(const TrainConfig& config, std::span<const ManifestRow> manifest,
                               const InputSpec& input);

std::uint64_t member_seed(std::uint64_t seed, int member_index);

struct EnsembleRun {
  std::vector<Checkpoint> checkpoints;  // member order
  std::vector<std::vector<EpochRecord>> histories;
  std::vector<ManifestRow> train_manifest;
  Split split;
  InputSpec input;
};

// Split (validation-loss mode only), balance the training side, size every
// image to the input spec, then train each member with seed
// member_seed(config.seed, index).
EnsembleRun train_ensemble(const EnsembleSpec& spec, std::span<const ImageSample> corpus, const JitterSpec& jitter,
                           const TrainConfig& config, const PipelineOptions& options = {},
                           const BackboneProvider& provider = default_provider());

// member,epoch,train_loss,val_loss
void write_training_log(const std::filesystem::path& path, std::span<const std::vector<EpochRecord>> histories);

}  // namespace padens
