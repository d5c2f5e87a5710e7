#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "padens/label.hpp"
#include "padens/model.hpp"
#include "padens/train.hpp"

namespace padens {

using Probs = std::array<double, kNumClasses>;

struct Prediction {
  std::string id;
  std::vector<Probs> per_member_probs;  // member order
  Probs mean_probs{};
  Label label = Label::kNegative;
};

enum class Averaging { kProbability, kLogit };

std::string to_string(Averaging a);
Averaging parse_averaging(const std::string& text);  // "prob" | "logit"

// Argmax with ties toward the lowest column, mapped through label_mapping.
// The vector must be nonnegative and sum to 1 within 1e-6.
Label classify(std::span<const double> mean_probs, const std::array<int, kNumClasses>& label_mapping = {-1, 0, 1});

// Raw scores [N, 3] for a batch of already sized images.
using ScoreFn = std::function<nn::Tensor(std::span<const ImageSample> batch)>;

struct EnsembleMember {
  std::string name;
  ScoreFn scores;
  InputSpec input;
  std::array<int, kNumClasses> label_mapping{-1, 0, 1};
};

// Combines per-member score matrices (each [N, 3], same N) into predictions.
std::vector<Prediction> combine_scores(std::span<const std::string> ids, std::span<const nn::Tensor> member_scores,
                                       Averaging averaging = Averaging::kProbability,
                                       const std::array<int, kNumClasses>& label_mapping = {-1, 0, 1});

// Members must agree on label mapping and input spec; every image must
// already have the target size. Output order is input order.
std::vector<Prediction> predict(std::span<const EnsembleMember> members, std::span<const ImageSample> corpus,
                                Averaging averaging = Averaging::kProbability, int batch_size = 8);

// Trained members restored from checkpoints.
class LoadedEnsemble {
 public:
  explicit LoadedEnsemble(std::vector<Checkpoint> checkpoints, const BackboneProvider& provider = default_provider());

  std::span<const Checkpoint> checkpoints() const { return checkpoints_; }
  const InputSpec& input() const { return checkpoints_.front().input; }
  std::vector<EnsembleMember> members();

 private:
  std::vector<Checkpoint> checkpoints_;
  std::vector<Classifier> classifiers_;
};

// Throws ValidationError when checkpoints disagree on label mapping or input.
void check_compatible(std::span<const Checkpoint> checkpoints);

std::vector<Prediction> predict(std::span<const Checkpoint> checkpoints, std::span<const ImageSample> corpus,
                                Averaging averaging = Averaging::kProbability,
                                const BackboneProvider& provider = default_provider());

// id,p_neg1,p_0,p_1,label at round-trip precision.
void write_prediction_dump(const std::filesystem::path& path, std::span<const Prediction> predictions);

}  // namespace padens
