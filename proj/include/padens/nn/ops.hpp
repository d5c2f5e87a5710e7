#pragma once

#include <span>

#include "padens/nn/autograd.hpp"
#include "padens/rng.hpp"

namespace padens::nn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// x [N,C,H,W], weight [O, C/groups, kh, kw], bias [O] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions options);

// x [N,F], weight [O,F], bias [O] or undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

struct BatchNormState {
  Tensor* running_mean;
  Tensor* running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization of x [N,C,H,W]. In training mode batch statistics
// are used and the running estimates are updated (unbiased variance).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState state, bool training);

Var relu(const Var& x);
Var relu6(const Var& x);
Var sigmoid(const Var& x);
Var silu(const Var& x);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double value);
Var sum(const Var& x);

// x [N,C,H,W] times per-(n,c) gates s [N,C,1,1].
Var scale_channels(const Var& x, const Var& gates);

Var max_pool2d(const Var& x, int kernel, int stride, int padding);
Var adaptive_avg_pool2d(const Var& x, int out_h, int out_w);
Var flatten(const Var& x);

Var dropout(const Var& x, double p, Rng& rng, bool training);
// Drops whole samples of a residual branch with probability p (train mode only).
Var stochastic_depth(const Var& x, double p, Rng& rng, bool training);

// Mean cross-entropy of logits [N,C] against class indices.
Var cross_entropy(const Var& logits, std::span<const int> targets);

// Row-wise, max-shifted.
Tensor softmax_rows(const Tensor& logits);

}  // namespace padens::nn
