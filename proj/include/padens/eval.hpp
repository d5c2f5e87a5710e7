#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "padens/ensemble.hpp"
#include "padens/label.hpp"
#include "padens/train.hpp"

namespace padens {

// Rows = true class, columns = predicted class, both in class_index order.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> cells{};

  std::int64_t at(Label truth, Label predicted) const { return cells[class_index(truth)][class_index(predicted)]; }
  std::int64_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted);

struct F1Report {
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  std::array<std::int64_t, kNumClasses> support{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;  // equals accuracy for single-label data

  double f1_of(Label l) const { return f1[class_index(l)]; }
};

// Any 0/0 ratio counts as 0.
F1Report f1_report(const ConfusionMatrix& cm);

nlohmann::json report_to_json(const F1Report& report, const ConfusionMatrix& cm);
std::string format_report(const F1Report& report, const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Submission files

struct SubmissionRow {
  std::string id;
  Label label;
  bool operator==(const SubmissionRow&) const = default;
};

// "id,malignant" then one row per prediction in input order.
void write_submission(const std::filesystem::path& path, std::span<const Prediction> predictions);
void write_submission(const std::filesystem::path& path, std::span<const SubmissionRow> rows);
// Accepts a submission file or a prediction dump (label taken from the last column).
std::vector<SubmissionRow> read_predictions(const std::filesystem::path& path);

struct Evaluation {
  ConfusionMatrix cm;
  F1Report report;
};

// Pairs rows by id; both sides must cover exactly the same ids.
Evaluation evaluate(std::span<const LabelRow> truth, std::span<const SubmissionRow> predicted);

// ---------------------------------------------------------------------------
// Held-out runs and variant comparison

enum class Strategy { kEnsemble, kBestSingle };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

// Member with the lowest best_loss (earliest member on ties).
std::size_t best_single_index(std::span<const Checkpoint> checkpoints);

struct HoldoutSpec {
  double fraction = 0.25;
  Averaging averaging = Averaging::kProbability;
};

// Seed of the held-out split for a run seed; shared by every variant.
std::uint64_t holdout_seed(std::uint64_t seed);
Split holdout_split(std::span<const ImageSample> corpus, std::uint64_t seed, double fraction);

struct HoldoutResult {
  EnsembleRun run;
  std::vector<Prediction> predictions;  // held-out samples, split order
  Evaluation evaluation;
};

// Trains on the non-held-out part and scores predictions on the held-out
// part. Unless options.target is set, the input target comes from the whole
// corpus so every held-out image fits.
HoldoutResult run_holdout(const EnsembleSpec& spec, std::span<const ImageSample> corpus, const JitterSpec& jitter,
                          const TrainConfig& config, const PipelineOptions& options, Strategy strategy,
                          const HoldoutSpec& holdout = {}, const BackboneProvider& provider = default_provider());

// Scores an already trained run on the held-out samples.
HoldoutResult score_holdout(EnsembleRun run, std::span<const ImageSample> held_out, Strategy strategy,
                            Averaging averaging, const BackboneProvider& provider = default_provider());

struct Variant {
  std::string name;
  Sizing sizing = Sizing::kPad;
  Strategy strategy = Strategy::kEnsemble;
  bool balance = true;
};

// {pad, resize, crop} x {ensemble, best_single}.
std::vector<Variant> default_variants();

struct AblationRow {
  Variant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> macro_f1;  // one per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
};

// Mean and sample standard deviation (n - 1); stddev 0 when n == 1.
std::pair<double, double> mean_stddev(std::span<const double> values);

std::vector<AblationRow> ablation_report(std::span<const Variant> variants, const EnsembleSpec& spec,
                                         std::span<const ImageSample> corpus, const JitterSpec& jitter,
                                         const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                         const HoldoutSpec& holdout = {},
                                         const BackboneProvider& provider = default_provider());

// variant,sizing,strategy,balance,seeds,macro_f1_mean,macro_f1_std,per_seed
void write_ablation_table(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace padens
