#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "padens/archive.hpp"
#include "padens/image.hpp"
#include "padens/nn/module.hpp"

namespace padens {

struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};

  void validate() const;
  bool operator==(const Normalization&) const = default;
};

struct BackboneSpec {
  std::string architecture;
  bool pretrained = false;
  Normalization normalization;

  bool operator==(const BackboneSpec&) const = default;
};

// Ordered ensemble members; the order is part of the serialized ensemble.
struct EnsembleSpec {
  std::vector<BackboneSpec> members;
  bool operator==(const EnsembleSpec&) const = default;
};

// Feature extractor with the source architecture's classification layer removed.
class Backbone : public nn::Module {
 public:
  // x [N,3,H,W] -> [N, feature_width()]
  virtual nn::Var features(const nn::Var& x) = 0;
  virtual int feature_width() const = 0;
};

// Realizes architectures by name. The built-in provider and test doubles
// satisfy the same contract.
class BackboneProvider {
 public:
  virtual ~BackboneProvider() = default;
  virtual std::vector<std::string> architectures() const = 0;
  bool has(const std::string& name) const;
  // Throws UnknownArchitecture for unregistered names.
  virtual Normalization normalization(const std::string& name) const = 0;
  // Throws UnknownArchitecture, or PretrainedUnavailable when pretrained
  // weights are requested but cannot be found.
  virtual std::unique_ptr<Backbone> create(const std::string& name, bool pretrained, std::uint64_t seed) const = 0;
};

inline constexpr const char* kWeightsDirEnv = "PADENS_WEIGHTS_DIR";

// resnet34, resnet50, vgg16, efficientnet_b0, mobilenet_v2, tiny_test_net.
// Pretrained weights are read from `<weights_dir>/<architecture>.pdw`.
class BuiltinProvider : public BackboneProvider {
 public:
  explicit BuiltinProvider(std::optional<std::filesystem::path> weights_dir);
  std::vector<std::string> architectures() const override;
  Normalization normalization(const std::string& name) const override;
  std::unique_ptr<Backbone> create(const std::string& name, bool pretrained, std::uint64_t seed) const override;

  const std::optional<std::filesystem::path>& weights_dir() const { return weights_dir_; }

 private:
  std::optional<std::filesystem::path> weights_dir_;
};

// Built-in provider configured from PADENS_WEIGHTS_DIR.
const BackboneProvider& default_provider();

// Copies matching tensors (parameters and buffers) into `module`. Every
// module tensor must be present with the same shape; extra archive entries
// (such as the source classification layer) are ignored.
void load_module_tensors(nn::Module& module, std::span<const NamedTensor> tensors, const std::string& prefix,
                         const std::string& origin);

// Backbone plus a fresh affine head emitting one score per class.
class Classifier {
 public:
  Classifier(BackboneSpec spec, std::unique_ptr<Backbone> backbone, int num_classes, std::uint64_t head_seed);

  const BackboneSpec& spec() const { return spec_; }
  int num_classes() const { return num_classes_; }
  Backbone& backbone() { return *backbone_; }
  nn::Linear& head() { return *head_; }

  // Normalized input [N,3,H,W] -> scores [N, num_classes].
  nn::Var logits(const nn::Var& input);

  // Prefixed "backbone." / "head.".
  std::vector<nn::NamedParameter> parameters() const;
  // Parameters then buffers, in registration order.
  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> state);

  void set_training(bool training);
  bool all_trainable() const;

 private:
  BackboneSpec spec_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<nn::Linear> head_;
  int num_classes_;
};

BackboneSpec default_backbone_spec(const std::string& architecture, bool pretrained,
                                   const BackboneProvider& provider = default_provider());

// resnet34, resnet50, vgg16, efficientnet_b0, mobilenet_v2.
EnsembleSpec default_ensemble_spec(bool pretrained = true, const BackboneProvider& provider = default_provider());

Classifier build_classifier(const BackboneSpec& spec, int num_classes, std::uint64_t seed,
                            const BackboneProvider& provider = default_provider());

// Pixels / 255, then per-channel (x - mean) / std. All images must share
// one size.
nn::Tensor to_input_batch(std::span<const Image> images, const Normalization& norm);
nn::Tensor to_input_batch(std::span<const ImageSample> samples, const Normalization& norm);

// Inference scores [N, num_classes] in evaluation mode; 0 rows for an empty batch.
nn::Tensor forward(Classifier& classifier, std::span<const ImageSample> batch);

// Max-shifted exp-normalize. Throws ValidationError on non-finite input.
std::vector<double> softmax(std::span<const double> scores);

}  // namespace padens
