#include "padens/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>

#include "backbones/backbones.hpp"
#include "padens/error.hpp"

namespace padens {

namespace {

constexpr Normalization kImageNet{{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
constexpr Normalization kHalf{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};

struct Registration {
  const char* name;
  Normalization normalization;
  std::unique_ptr<Backbone> (*make)(std::uint64_t);
  bool needs_weights;  // false: no published weights exist, pretrained is a no-op
};

std::unique_ptr<Backbone> make_resnet34(std::uint64_t seed) { return backbones::make_resnet(34, seed); }
std::unique_ptr<Backbone> make_resnet50(std::uint64_t seed) { return backbones::make_resnet(50, seed); }

const std::vector<Registration>& registry() {
  static const std::vector<Registration> regs = {
      {"resnet34", kImageNet, &make_resnet34, true},
      {"resnet50", kImageNet, &make_resnet50, true},
      {"vgg16", kImageNet, &backbones::make_vgg16, true},
      {"efficientnet_b0", kImageNet, &backbones::make_efficientnet_b0, true},
      {"mobilenet_v2", kImageNet, &backbones::make_mobilenet_v2, true},
      {"tiny_test_net", kHalf, &backbones::make_tiny_test_net, false},
  };
  return regs;
}

const Registration& lookup(const std::string& name) {
  for (const auto& r : registry())
    if (name == r.name) return r;
  throw UnknownArchitecture(name);
}

}  // namespace

void Normalization::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c]) || !std::isfinite(std[c]) || !(std[c] > 0.0))
      throw ValidationError("normalization needs finite means and positive standard deviations");
  }
}

bool BackboneProvider::has(const std::string& name) const {
  const auto names = architectures();
  return std::find(names.begin(), names.end(), name) != names.end();
}

BuiltinProvider::BuiltinProvider(std::optional<std::filesystem::path> weights_dir)
    : weights_dir_(std::move(weights_dir)) {}

std::vector<std::string> BuiltinProvider::architectures() const {
  std::vector<std::string> names;
  for (const auto& r : registry()) names.emplace_back(r.name);
  return names;
}

Normalization BuiltinProvider::normalization(const std::string& name) const { return lookup(name).normalization; }

std::unique_ptr<Backbone> BuiltinProvider::create(const std::string& name, bool pretrained,
                                                  std::uint64_t seed) const {
  const Registration& reg = lookup(name);
  auto backbone = reg.make(seed);
  if (!pretrained || !reg.needs_weights) return backbone;
  if (!weights_dir_)
    throw PretrainedUnavailable("pretrained weights for " + name + " requested but " + kWeightsDirEnv + " is not set");
  const auto path = *weights_dir_ / (name + ".pdw");
  if (!std::filesystem::exists(path))
    throw PretrainedUnavailable("pretrained weights for " + name + " not found at " + path.string());
  Archive archive;
  try {
    archive = read_archive(path);
  } catch (const CheckpointError& e) {
    throw PretrainedUnavailable("cannot read pretrained weights for " + name + ": " + e.what());
  }
  load_module_tensors(*backbone, archive.tensors, "", path.string());
  return backbone;
}

const BackboneProvider& default_provider() {
  static const BuiltinProvider provider([]() -> std::optional<std::filesystem::path> {
    if (const char* dir = std::getenv(kWeightsDirEnv); dir && *dir) return std::filesystem::path(dir);
    return std::nullopt;
  }());
  return provider;
}

void load_module_tensors(nn::Module& module, std::span<const NamedTensor> tensors, const std::string& prefix,
                         const std::string& origin) {
  std::map<std::string, const nn::Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  auto assign = [&](const std::string& name, nn::Tensor& dst) {
    auto it = by_name.find(prefix + name);
    if (it == by_name.end()) throw CheckpointError(origin + " lacks tensor '" + prefix + name + "'");
    if (it->second->shape() != dst.shape())
      throw CheckpointError(origin + ": tensor '" + prefix + name + "' has shape " +
                            nn::shape_string(it->second->shape()) + ", expected " + nn::shape_string(dst.shape()));
    dst = *it->second;
  };
  for (auto& p : module.named_parameters()) assign(p.name, p.var.mutable_value());
  for (auto& b : module.named_buffers()) assign(b.name, *b.tensor);
}

Classifier::Classifier(BackboneSpec spec, std::unique_ptr<Backbone> backbone, int num_classes,
                       std::uint64_t head_seed)
    : spec_(std::move(spec)), backbone_(std::move(backbone)), num_classes_(num_classes) {
  if (num_classes < 2) throw ValidationError("a classifier needs at least 2 classes");
  spec_.normalization.validate();
  Rng rng(derive_seed(head_seed, {0x4EAD}));
  head_ = std::make_unique<nn::Linear>(backbone_->feature_width(), num_classes, rng);
}

nn::Var Classifier::logits(const nn::Var& input) { return head_->forward(backbone_->features(input)); }

std::vector<nn::NamedParameter> Classifier::parameters() const {
  std::vector<nn::NamedParameter> out;
  for (auto& p : backbone_->named_parameters()) out.push_back({"backbone." + p.name, p.var});
  for (auto& p : head_->named_parameters()) out.push_back({"head." + p.name, p.var});
  return out;
}

std::vector<NamedTensor> Classifier::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : parameters()) out.push_back({p.name, p.var.value()});
  for (const auto& b : backbone_->named_buffers()) out.push_back({"backbone." + b.name, *b.tensor});
  return out;
}

void Classifier::load_state(std::span<const NamedTensor> state) {
  load_module_tensors(*backbone_, state, "backbone.", "classifier state");
  load_module_tensors(*head_, state, "head.", "classifier state");
}

void Classifier::set_training(bool training) {
  backbone_->set_training(training);
  head_->set_training(training);
}

bool Classifier::all_trainable() const {
  const auto params = parameters();
  return !params.empty() &&
         std::all_of(params.begin(), params.end(), [](const nn::NamedParameter& p) { return p.var.requires_grad(); });
}

BackboneSpec default_backbone_spec(const std::string& architecture, bool pretrained,
                                   const BackboneProvider& provider) {
  return BackboneSpec{architecture, pretrained, provider.normalization(architecture)};
}

EnsembleSpec default_ensemble_spec(bool pretrained, const BackboneProvider& provider) {
  EnsembleSpec spec;
  for (const char* name : {"resnet34", "resnet50", "vgg16", "efficientnet_b0", "mobilenet_v2"})
    spec.members.push_back(default_backbone_spec(name, pretrained, provider));
  return spec;
}

Classifier build_classifier(const BackboneSpec& spec, int num_classes, std::uint64_t seed,
                            const BackboneProvider& provider) {
  if (num_classes < 2) throw ValidationError("a classifier needs at least 2 classes");
  spec.normalization.validate();
  auto backbone = provider.create(spec.architecture, spec.pretrained, derive_seed(seed, {0xBAC4}));
  return Classifier(spec, std::move(backbone), num_classes, seed);
}

nn::Tensor to_input_batch(std::span<const Image> images, const Normalization& norm) {
  if (images.empty()) return nn::Tensor({0, 3, 0, 0});
  const int h = images.front().height();
  const int w = images.front().width();
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w)
      throw ValidationError("batch mixes image sizes " + std::to_string(h) + "x" + std::to_string(w) + " and " +
                            std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  nn::Tensor batch({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto px = images[n].pixels();
    for (int c = 0; c < 3; ++c) {
      const double scale = 1.0 / (255.0 * norm.std[c]);
      const double shift = norm.mean[c] / norm.std[c];
      double* dst = &batch.at(static_cast<int>(n), c, 0, 0);
      for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) dst[i] = px[i * 3 + c] * scale - shift;
    }
  }
  return batch;
}

nn::Tensor to_input_batch(std::span<const ImageSample> samples, const Normalization& norm) {
  std::vector<Image> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  return to_input_batch(images, norm);
}

nn::Tensor forward(Classifier& classifier, std::span<const ImageSample> batch) {
  if (batch.empty()) return nn::Tensor({0, classifier.num_classes()});
  nn::Tensor input = to_input_batch(batch, classifier.spec().normalization);
  nn::NoGradGuard no_grad;
  const bool was_training = classifier.backbone().training();
  classifier.set_training(false);
  nn::Tensor scores = classifier.logits(nn::Var::constant(std::move(input))).value();
  classifier.set_training(was_training);
  for (double v : scores.values()) {
    if (!std::isfinite(v)) throw Error("classifier produced a non-finite score");
  }
  return scores;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("softmax of an empty score vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("softmax input must be finite");
    mx = std::max(mx, s);
  }
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (out[i] = std::exp(scores[i] - mx));
  for (double& v : out) v /= z;
  return out;
}

}  // namespace padens
