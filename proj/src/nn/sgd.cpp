#include "padens/nn/sgd.hpp"

#include <stdexcept>

namespace padens::nn {

Sgd::Sgd(std::vector<Var> parameters, double learning_rate, double momentum)
    : params_(std::move(parameters)), learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.shape(), 0.0);
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (p.grad().empty()) continue;
    Tensor& v = velocity_[i];
    Tensor& value = p.mutable_value();
    const Tensor& g = p.grad();
    for (std::size_t k = 0; k < value.numel(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      value[k] -= learning_rate_ * v[k];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace padens::nn
