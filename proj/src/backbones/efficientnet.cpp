#include <algorithm>

#include "backbones.hpp"

namespace padens::backbones {

namespace {

using nn::Activation;
using nn::ConvSpec;
using nn::Var;

class SqueezeExcitation : public nn::Layer {
 public:
  SqueezeExcitation(int channels, int squeeze, Rng& rng) {
    fc1_ = &add_module("fc1", std::make_unique<nn::Conv2d>(ConvSpec{channels, squeeze, 1, 1, 0, 1, true}, rng));
    fc2_ = &add_module("fc2", std::make_unique<nn::Conv2d>(ConvSpec{squeeze, channels, 1, 1, 0, 1, true}, rng));
  }
  Var forward(const Var& x) override {
    Var s = nn::adaptive_avg_pool2d(x, 1, 1);
    s = nn::sigmoid(fc2_->forward(nn::silu(fc1_->forward(s))));
    return nn::scale_channels(x, s);
  }

 private:
  nn::Conv2d* fc1_;
  nn::Conv2d* fc2_;
};

class MBConv : public nn::Layer {
 public:
  MBConv(int expand_ratio, int kernel, int stride, int in, int out, double drop_prob, std::shared_ptr<Rng> noise,
         Rng& rng)
      : use_residual_(stride == 1 && in == out), drop_prob_(drop_prob), noise_(std::move(noise)) {
    const int expanded = in * expand_ratio;
    auto& block = add_module("block", std::make_unique<nn::Sequential>());
    if (expanded != in) block.append(nn::conv_norm_act(ConvSpec{in, expanded, 1}, Activation::kSiLU, rng));
    block.append(nn::conv_norm_act(ConvSpec{expanded, expanded, kernel, stride, (kernel - 1) / 2, expanded},
                                   Activation::kSiLU, rng));
    block.append(std::make_unique<SqueezeExcitation>(expanded, std::max(1, in / 4), rng));
    block.append(nn::conv_norm_act(ConvSpec{expanded, out, 1}, std::nullopt, rng));
    block_ = &block;
  }

  Var forward(const Var& x) override {
    Var h = block_->forward(x);
    if (!use_residual_) return h;
    return nn::add(nn::stochastic_depth(h, drop_prob_, *noise_, training()), x);
  }

 private:
  bool use_residual_;
  double drop_prob_;
  std::shared_ptr<Rng> noise_;
  nn::Sequential* block_;
};

class EfficientNetB0 : public Backbone {
 public:
  explicit EfficientNetB0(std::uint64_t seed) : noise_(std::make_shared<Rng>(derive_seed(seed, {0xEB0}))) {
    Rng rng(seed);
    struct Stage {
      int expand, kernel, stride, in, out, layers;
    };
    static constexpr Stage kStages[] = {{1, 3, 1, 32, 16, 1},   {6, 3, 2, 16, 24, 2},  {6, 5, 2, 24, 40, 2},
                                        {6, 3, 2, 40, 80, 3},   {6, 5, 1, 80, 112, 3}, {6, 5, 2, 112, 192, 4},
                                        {6, 3, 1, 192, 320, 1}};
    constexpr double kStochasticDepth = 0.2;
    int total_blocks = 0;
    for (const auto& s : kStages) total_blocks += s.layers;

    auto& f = add_module("features", std::make_unique<nn::Sequential>());
    f.append(nn::conv_norm_act(ConvSpec{3, 32, 3, 2, 1}, Activation::kSiLU, rng));
    int block_id = 0;
    for (const auto& s : kStages) {
      auto stage = std::make_unique<nn::Sequential>();
      for (int i = 0; i < s.layers; ++i) {
        const double p = kStochasticDepth * block_id / total_blocks;
        stage->append(std::make_unique<MBConv>(s.expand, s.kernel, i == 0 ? s.stride : 1, i == 0 ? s.in : s.out, s.out,
                                               p, noise_, rng));
        ++block_id;
      }
      f.append(std::move(stage));
    }
    f.append(nn::conv_norm_act(ConvSpec{320, 1280, 1}, Activation::kSiLU, rng));
    features_ = &f;
    auto& cls = add_module("classifier", std::make_unique<nn::Sequential>());
    cls.append(std::make_unique<nn::Dropout>(0.2, noise_));
    classifier_ = &cls;
  }

  Var features(const Var& x) override {
    Var h = nn::flatten(nn::adaptive_avg_pool2d(features_->forward(x), 1, 1));
    return classifier_->forward(h);
  }
  int feature_width() const override { return 1280; }

 private:
  std::shared_ptr<Rng> noise_;
  nn::Sequential* features_;
  nn::Sequential* classifier_;
};

}  // namespace

std::unique_ptr<Backbone> make_efficientnet_b0(std::uint64_t seed) { return std::make_unique<EfficientNetB0>(seed); }

}  // namespace padens::backbones
