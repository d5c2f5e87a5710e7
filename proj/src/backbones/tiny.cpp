#include "backbones.hpp"

namespace padens::backbones {

namespace {

// conv3x3(3->8) bn relu maxpool2 conv3x3(8->16) bn relu global-avg -> 16 features.
class TinyTestNet : public Backbone {
 public:
  explicit TinyTestNet(std::uint64_t seed) {
    Rng rng(seed);
    auto& f = add_module("features", std::make_unique<nn::Sequential>());
    f.append(std::make_unique<nn::Conv2d>(nn::ConvSpec{3, 8, 3, 1, 1}, rng));
    f.append(std::make_unique<nn::BatchNorm2d>(8));
    f.append(std::make_unique<nn::ActivationLayer>(nn::Activation::kReLU));
    f.append(std::make_unique<nn::MaxPool2d>(2, 2, 0));
    f.append(std::make_unique<nn::Conv2d>(nn::ConvSpec{8, 16, 3, 1, 1}, rng));
    f.append(std::make_unique<nn::BatchNorm2d>(16));
    f.append(std::make_unique<nn::ActivationLayer>(nn::Activation::kReLU));
    features_ = &f;
  }

  nn::Var features(const nn::Var& x) override {
    return nn::flatten(nn::adaptive_avg_pool2d(features_->forward(x), 1, 1));
  }
  int feature_width() const override { return 16; }

 private:
  nn::Sequential* features_;
};

}  // namespace

std::unique_ptr<Backbone> make_tiny_test_net(std::uint64_t seed) { return std::make_unique<TinyTestNet>(seed); }

}  // namespace padens::backbones
