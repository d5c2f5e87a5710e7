#include "backbones.hpp"

namespace padens::backbones {

namespace {

// Configuration "D": 13 convolutions in five blocks. Keeps the first two
// fully connected layers, so features are 4096 wide.
class Vgg16 : public Backbone {
 public:
  explicit Vgg16(std::uint64_t seed) : noise_(std::make_shared<Rng>(derive_seed(seed, {0xD20}))) {
    Rng rng(seed);
    static constexpr int kCfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    auto& f = add_module("features", std::make_unique<nn::Sequential>());
    int in = 3;
    for (int c : kCfg) {
      if (c == 0) {
        f.append(std::make_unique<nn::MaxPool2d>(2, 2, 0));
        continue;
      }
      f.append(std::make_unique<nn::Conv2d>(nn::ConvSpec{in, c, 3, 1, 1, 1, true}, rng));
      f.append(std::make_unique<nn::ActivationLayer>(nn::Activation::kReLU));
      in = c;
    }
    features_ = &f;
    auto& cls = add_module("classifier", std::make_unique<nn::Sequential>());
    auto& fc1 = cls.append(std::make_unique<nn::Linear>(512 * 7 * 7, 4096, rng));
    cls.append(std::make_unique<nn::ActivationLayer>(nn::Activation::kReLU));
    cls.append(std::make_unique<nn::Dropout>(0.5, noise_));
    auto& fc2 = cls.append(std::make_unique<nn::Linear>(4096, 4096, rng));
    cls.append(std::make_unique<nn::ActivationLayer>(nn::Activation::kReLU));
    cls.append(std::make_unique<nn::Dropout>(0.5, noise_));
    for (auto* fc : {&fc1, &fc2}) {
      for (auto& v : fc->weight().mutable_value().values()) v = rng.normal(0.0, 0.01);
      fc->bias().mutable_value().fill(0.0);
    }
    classifier_ = &cls;
  }

  nn::Var features(const nn::Var& x) override {
    nn::Var h = nn::adaptive_avg_pool2d(features_->forward(x), 7, 7);
    return classifier_->forward(nn::flatten(h));
  }
  int feature_width() const override { return 4096; }

 private:
  std::shared_ptr<Rng> noise_;
  nn::Sequential* features_;
  nn::Sequential* classifier_;
};

}  // namespace

std::unique_ptr<Backbone> make_vgg16(std::uint64_t seed) { return std::make_unique<Vgg16>(seed); }

}  // namespace padens::backbones
