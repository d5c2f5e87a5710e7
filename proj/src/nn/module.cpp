#include "padens/nn/module.hpp"

#include <cmath>
#include <stdexcept>

namespace padens::nn {

std::vector<NamedParameter> Module::named_parameters() const {
  std::vector<NamedParameter> out;
  collect_parameters("", out);
  return out;
}

std::vector<NamedBuffer> Module::named_buffers() const {
  std::vector<NamedBuffer> out;
  collect_buffers("", out);
  return out;
}

void Module::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  for (const auto& [name, var] : params_) out.push_back({prefix + name, var});
  for (const auto& [name, child] : children_) child->collect_parameters(prefix + name + ".", out);
}

void Module::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) const {
  for (const auto& [name, t] : buffers_) out.push_back({prefix + name, t.get()});
  for (const auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [_, child] : children_) child->set_training(training);
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.var.zero_grad();
}

Var Module::add_parameter(std::string name, Tensor init) {
  Var v = Var::parameter(std::move(init));
  params_.emplace_back(std::move(name), v);
  return v;
}

Tensor& Module::add_buffer(std::string name, Tensor init) {
  buffers_.emplace_back(std::move(name), std::make_unique<Tensor>(std::move(init)));
  return *buffers_.back().second;
}

Var Sequential::forward(const Var& x) {
  Var h = x;
  for (Layer* layer : layers_) h = layer->forward(h);
  return h;
}

Conv2d::Conv2d(const ConvSpec& spec, Rng& init_rng) : spec_(spec) {
  if (spec.in_channels % spec.groups != 0 || spec.out_channels % spec.groups != 0)
    throw std::invalid_argument("Conv2d: channels not divisible by groups");
  const int cg = spec.in_channels / spec.groups;
  Tensor w({spec.out_channels, cg, spec.kernel, spec.kernel});
  // Kaiming normal, fan_out mode, ReLU gain.
  const double fan_out = static_cast<double>(spec.out_channels) * spec.kernel * spec.kernel / spec.groups;
  const double std = std::sqrt(2.0 / fan_out);
  for (auto& v : w.values()) v = init_rng.normal(0.0, std);
  weight_ = add_parameter("weight", std::move(w));
  if (spec.bias) bias_ = add_parameter("bias", Tensor({spec.out_channels}, 0.0));
}

Var Conv2d::forward(const Var& x) {
  return conv2d(x, weight_, bias_, {spec_.stride, spec_.padding, spec_.groups});
}

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum) : eps_(eps), momentum_(momentum) {
  weight_ = add_parameter("weight", Tensor({channels}, 1.0));
  bias_ = add_parameter("bias", Tensor({channels}, 0.0));
  running_mean_ = &add_buffer("running_mean", Tensor({channels}, 0.0));
  running_var_ = &add_buffer("running_var", Tensor({channels}, 1.0));
  batches_tracked_ = &add_buffer("num_batches_tracked", Tensor(Shape{}, 0.0));
}

Var BatchNorm2d::forward(const Var& x) {
  if (training()) (*batches_tracked_)[0] += 1.0;
  return batch_norm(x, weight_, bias_, {running_mean_, running_var_, momentum_, eps_}, training());
}

Linear::Linear(int in_features, int out_features, Rng& init_rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  Tensor w({out_features, in_features});
  for (auto& v : w.values()) v = init_rng.uniform(-bound, bound);
  weight_ = add_parameter("weight", std::move(w));
  if (bias) {
    Tensor b({out_features});
    for (auto& v : b.values()) v = init_rng.uniform(-bound, bound);
    bias_ = add_parameter("bias", std::move(b));
  }
}

Var Linear::forward(const Var& x) { return linear(x, weight_, bias_); }

Var activate(const Var& x, Activation kind) {
  switch (kind) {
    case Activation::kReLU: return relu(x);
    case Activation::kReLU6: return relu6(x);
    case Activation::kSiLU: return silu(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  throw std::logic_error("unknown activation");
}

Var ActivationLayer::forward(const Var& x) { return activate(x, kind_); }

std::unique_ptr<Sequential> conv_norm_act(const ConvSpec& spec, std::optional<Activation> act, Rng& init_rng) {
  auto seq = std::make_unique<Sequential>();
  seq->append(std::make_unique<Conv2d>(spec, init_rng));
  seq->append(std::make_unique<BatchNorm2d>(spec.out_channels));
  if (act) seq->append(std::make_unique<ActivationLayer>(*act));
  return seq;
}

}  // namespace padens::nn
