#pragma once

#include <vector>

#include "padens/nn/autograd.hpp"

namespace padens::nn {

// Heavy-ball SGD: v <- momentum * v + g ; p <- p - lr * v.
class Sgd {
 public:
  Sgd(std::vector<Var> parameters, double learning_rate, double momentum);

  void step();
  void zero_grad();

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  double learning_rate_;
  double momentum_;
};

}  // namespace padens::nn
