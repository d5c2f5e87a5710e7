#include <stdexcept>

#include "backbones.hpp"

namespace padens::backbones {

namespace {

using nn::Activation;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvSpec;
using nn::Var;

class ResidualBlock : public nn::Layer {
 protected:
  Var shortcut(const Var& x) { return downsample_ ? downsample_->forward(x) : x; }
  void make_downsample(int in, int out, int stride, Rng& rng) {
    if (stride == 1 && in == out) return;
    auto ds = std::make_unique<nn::Sequential>();
    ds->append(std::make_unique<Conv2d>(ConvSpec{in, out, 1, stride, 0}, rng));
    ds->append(std::make_unique<BatchNorm2d>(out));
    downsample_ = &add_module("downsample", std::move(ds));
  }

 private:
  nn::Sequential* downsample_ = nullptr;
};

class BasicBlock : public ResidualBlock {
 public:
  static constexpr int kExpansion = 1;
  BasicBlock(int in, int planes, int stride, Rng& rng) {
    conv1_ = &add_module("conv1", std::make_unique<Conv2d>(ConvSpec{in, planes, 3, stride, 1}, rng));
    bn1_ = &add_module("bn1", std::make_unique<BatchNorm2d>(planes));
    conv2_ = &add_module("conv2", std::make_unique<Conv2d>(ConvSpec{planes, planes, 3, 1, 1}, rng));
    bn2_ = &add_module("bn2", std::make_unique<BatchNorm2d>(planes));
    make_downsample(in, planes, stride, rng);
  }
  Var forward(const Var& x) override {
    Var h = nn::relu(bn1_->forward(conv1_->forward(x)));
    h = bn2_->forward(conv2_->forward(h));
    return nn::relu(nn::add(h, shortcut(x)));
  }

 private:
  Conv2d *conv1_, *conv2_;
  BatchNorm2d *bn1_, *bn2_;
};

class Bottleneck : public ResidualBlock {
 public:
  static constexpr int kExpansion = 4;
  Bottleneck(int in, int planes, int stride, Rng& rng) {
    const int out = planes * kExpansion;
    conv1_ = &add_module("conv1", std::make_unique<Conv2d>(ConvSpec{in, planes, 1}, rng));
    bn1_ = &add_module("bn1", std::make_unique<BatchNorm2d>(planes));
    conv2_ = &add_module("conv2", std::make_unique<Conv2d>(ConvSpec{planes, planes, 3, stride, 1}, rng));
    bn2_ = &add_module("bn2", std::make_unique<BatchNorm2d>(planes));
    conv3_ = &add_module("conv3", std::make_unique<Conv2d>(ConvSpec{planes, out, 1}, rng));
    bn3_ = &add_module("bn3", std::make_unique<BatchNorm2d>(out));
    make_downsample(in, out, stride, rng);
  }
  Var forward(const Var& x) override {
    Var h = nn::relu(bn1_->forward(conv1_->forward(x)));
    h = nn::relu(bn2_->forward(conv2_->forward(h)));
    h = bn3_->forward(conv3_->forward(h));
    return nn::relu(nn::add(h, shortcut(x)));
  }

 private:
  Conv2d *conv1_, *conv2_, *conv3_;
  BatchNorm2d *bn1_, *bn2_, *bn3_;
};

class ResNet : public Backbone {
 public:
  template <class Block>
  static std::unique_ptr<ResNet> build(const int (&layers)[4], std::uint64_t seed) {
    auto net = std::unique_ptr<ResNet>(new ResNet());
    Rng rng(seed);
    net->conv1_ = &net->add_module("conv1", std::make_unique<Conv2d>(ConvSpec{3, 64, 7, 2, 3}, rng));
    net->bn1_ = &net->add_module("bn1", std::make_unique<BatchNorm2d>(64));
    int in = 64;
    const int planes[4] = {64, 128, 256, 512};
    for (int s = 0; s < 4; ++s) {
      auto stage = std::make_unique<nn::Sequential>();
      for (int b = 0; b < layers[s]; ++b) {
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        stage->append(std::make_unique<Block>(in, planes[s], stride, rng));
        in = planes[s] * Block::kExpansion;
      }
      net->stages_[s] = &net->add_module("layer" + std::to_string(s + 1), std::move(stage));
    }
    net->width_ = in;
    return net;
  }

  Var features(const Var& x) override {
    Var h = nn::relu(bn1_->forward(conv1_->forward(x)));
    h = nn::max_pool2d(h, 3, 2, 1);
    for (auto* stage : stages_) h = stage->forward(h);
    return nn::flatten(nn::adaptive_avg_pool2d(h, 1, 1));
  }
  int feature_width() const override { return width_; }

 private:
  ResNet() = default;
  Conv2d* conv1_ = nullptr;
  BatchNorm2d* bn1_ = nullptr;
  nn::Sequential* stages_[4] = {};
  int width_ = 0;
};

}  // namespace

std::unique_ptr<Backbone> make_resnet(int depth, std::uint64_t seed) {
  static constexpr int kLayers[4] = {3, 4, 6, 3};
  if (depth == 34) return ResNet::build<BasicBlock>(kLayers, seed);
  if (depth == 50) return ResNet::build<Bottleneck>(kLayers, seed);
  throw std::invalid_argument("unsupported resnet depth " + std::to_string(depth));
}

}  // namespace padens::backbones
