#include <cmath>

#include "backbones.hpp"

namespace padens::backbones {

namespace {

using nn::Activation;
using nn::ConvSpec;

class InvertedResidual : public nn::Layer {
 public:
  InvertedResidual(int in, int out, int stride, int expand_ratio, Rng& rng)
      : use_residual_(stride == 1 && in == out) {
    const int hidden = static_cast<int>(std::lround(in * static_cast<double>(expand_ratio)));
    auto& conv = add_module("conv", std::make_unique<nn::Sequential>());
    if (expand_ratio != 1) conv.append(nn::conv_norm_act(ConvSpec{in, hidden, 1}, Activation::kReLU6, rng));
    conv.append(nn::conv_norm_act(ConvSpec{hidden, hidden, 3, stride, 1, hidden}, Activation::kReLU6, rng));
    conv.append(std::make_unique<nn::Conv2d>(ConvSpec{hidden, out, 1}, rng));
    conv.append(std::make_unique<nn::BatchNorm2d>(out));
    conv_ = &conv;
  }

  nn::Var forward(const nn::Var& x) override {
    nn::Var h = conv_->forward(x);
    return use_residual_ ? nn::add(x, h) : h;
  }

 private:
  bool use_residual_;
  nn::Sequential* conv_;
};

class MobileNetV2 : public Backbone {
 public:
  explicit MobileNetV2(std::uint64_t seed) : noise_(std::make_shared<Rng>(derive_seed(seed, {0xB2}))) {
    Rng rng(seed);
    struct Stage {
      int t, c, n, s;
    };
    static constexpr Stage kStages[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                                        {6, 96, 3, 1},  {6, 160, 3, 2}, {6, 320, 1, 1}};
    auto& f = add_module("features", std::make_unique<nn::Sequential>());
    f.append(nn::conv_norm_act(ConvSpec{3, 32, 3, 2, 1}, Activation::kReLU6, rng));
    int in = 32;
    for (const auto& st : kStages) {
      for (int i = 0; i < st.n; ++i) {
        f.append(std::make_unique<InvertedResidual>(in, st.c, i == 0 ? st.s : 1, st.t, rng));
        in = st.c;
      }
    }
    f.append(nn::conv_norm_act(ConvSpec{in, 1280, 1}, Activation::kReLU6, rng));
    features_ = &f;
    auto& cls = add_module("classifier", std::make_unique<nn::Sequential>());
    cls.append(std::make_unique<nn::Dropout>(0.2, noise_));
    classifier_ = &cls;
  }

  nn::Var features(const nn::Var& x) override {
    nn::Var h = nn::flatten(nn::adaptive_avg_pool2d(features_->forward(x), 1, 1));
    return classifier_->forward(h);
  }
  int feature_width() const override { return 1280; }

 private:
  std::shared_ptr<Rng> noise_;
  nn::Sequential* features_;
  nn::Sequential* classifier_;
};

}  // namespace

std::unique_ptr<Backbone> make_mobilenet_v2(std::uint64_t seed) { return std::make_unique<MobileNetV2>(seed); }

}  // namespace padens::backbones
