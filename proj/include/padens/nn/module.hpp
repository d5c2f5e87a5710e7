#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "padens/nn/autograd.hpp"
#include "padens/nn/ops.hpp"

namespace padens::nn {

struct NamedParameter {
  std::string name;
  Var var;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

// Parameter/buffer registry with dotted hierarchical names, so state keys line
// up with the usual `layer1.0.conv1.weight` convention.
class Module {
 public:
  virtual ~Module() = default;
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedParameter> named_parameters() const;
  std::vector<NamedBuffer> named_buffers() const;

  void set_training(bool training);
  bool training() const { return training_; }

  void zero_grad();

 protected:
  Var add_parameter(std::string name, Tensor init);
  Tensor& add_buffer(std::string name, Tensor init);

  template <class M>
  M& add_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

 private:
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) const;

  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

class Layer : public Module {
 public:
  virtual Var forward(const Var& x) = 0;
};

class Sequential : public Layer {
 public:
  template <class L>
  L& append(std::unique_ptr<L> layer) {
    L& ref = *layer;
    layers_.push_back(&ref);
    add_module(std::to_string(layers_.size() - 1), std::move(layer));
    return ref;
  }
  Var forward(const Var& x) override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<Layer*> layers_;
};

struct ConvSpec {
  int in_channels;
  int out_channels;
  int kernel;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  bool bias = false;
};

class Conv2d : public Layer {
 public:
  Conv2d(const ConvSpec& spec, Rng& init_rng);
  Var forward(const Var& x) override;
  const ConvSpec& spec() const { return spec_; }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Var weight_;
  Var bias_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
  Var forward(const Var& x) override;

 private:
  Var weight_;
  Var bias_;
  Tensor* running_mean_;
  Tensor* running_var_;
  Tensor* batches_tracked_;
  double eps_;
  double momentum_;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, Rng& init_rng, bool bias = true);
  Var forward(const Var& x) override;
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }

 private:
  Var weight_;
  Var bias_;
};

enum class Activation { kReLU, kReLU6, kSiLU, kSigmoid };

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}
  Var forward(const Var& x) override;

 private:
  Activation kind_;
};

Var activate(const Var& x, Activation kind);

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), padding_(padding) {}
  Var forward(const Var& x) override { return max_pool2d(x, kernel_, stride_, padding_); }

 private:
  int kernel_, stride_, padding_;
};

class Dropout : public Layer {
 public:
  Dropout(double p, std::shared_ptr<Rng> rng) : p_(p), rng_(std::move(rng)) {}
  Var forward(const Var& x) override { return dropout(x, p_, *rng_, training()); }

 private:
  double p_;
  std::shared_ptr<Rng> rng_;
};

// Conv -> BatchNorm -> optional activation, registered as "0", "1", "2".
std::unique_ptr<Sequential> conv_norm_act(const ConvSpec& spec, std::optional<Activation> act, Rng& init_rng);

}  // namespace padens::nn
