#include "padens/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace padens::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

struct ConvGeometry {
  int n, c, h, w;
  int out_c, kh, kw;
  int oh, ow;
  int stride, pad, groups;
  int cg() const { return c / groups; }
  int og() const { return out_c / groups; }
  int k() const { return cg() * kh * kw; }
  int p() const { return oh * ow; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// col[k, p] for one sample and one group; k runs over (channel, ki, kj).
void im2col(const double* x, const ConvGeometry& g, int group, double* col) {
  const int P = g.p();
  for (int ci = 0; ci < g.cg(); ++ci) {
    const double* plane = x + static_cast<std::size_t>(group * g.cg() + ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * P;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          double* out = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.ow, 0.0);
            continue;
          }
          const double* in = plane + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            const int shift = kj - g.pad;
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox + shift;
              out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : 0.0;
            }
          } else {
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, int group, double* dx) {
  const int P = g.p();
  for (int ci = 0; ci < g.cg(); ++ci) {
    double* plane = dx + static_cast<std::size_t>(group * g.cg() + ci) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = col + (static_cast<std::size_t>(ci * g.kh + ki) * g.kw + kj) * P;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          double* out = plane + static_cast<std::size_t>(iy) * g.w;
          const double* in = row + static_cast<std::size_t>(oy) * g.ow;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <class F>
Var unary(const Var& x, F&& forward_and_derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  Tensor deriv(in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i) {
    auto [y, d] = forward_and_derivative(in[i]);
    out[i] = y;
    deriv[i] = d;
  }
  return Var::from_op(std::move(out), {x}, [deriv = std::move(deriv)](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    Tensor& ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * deriv[i];
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions options) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require(xv.rank() == 4 && wv.rank() == 4, "conv2d expects 4-D input and weight");
  ConvGeometry g{};
  g.n = xv.dim(0);
  g.c = xv.dim(1);
  g.h = xv.dim(2);
  g.w = xv.dim(3);
  g.out_c = wv.dim(0);
  g.kh = wv.dim(2);
  g.kw = wv.dim(3);
  g.stride = options.stride;
  g.pad = options.padding;
  g.groups = options.groups;
  require(g.groups >= 1 && g.c % g.groups == 0 && g.out_c % g.groups == 0, "conv2d: bad group count");
  require(wv.dim(1) == g.cg(), "conv2d: weight channel count does not match input");
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  require(g.oh >= 1 && g.ow >= 1, "conv2d: input smaller than kernel");
  if (bias.defined()) require(bias.value().numel() == static_cast<std::size_t>(g.out_c), "conv2d: bias size");

  const int K = g.k();
  const int P = g.p();
  const int OG = g.og();
  Tensor out({g.n, g.out_c, g.oh, g.ow});
  std::vector<double> col(g.direct() ? 0 : static_cast<std::size_t>(K) * P);
  for (int n = 0; n < g.n; ++n) {
    const double* xn = xv.data() + static_cast<std::size_t>(n) * g.c * g.h * g.w;
    for (int grp = 0; grp < g.groups; ++grp) {
      const double* cp;
      if (g.direct()) {
        cp = xn + static_cast<std::size_t>(grp) * g.cg() * P;
      } else {
        im2col(xn, g, grp, col.data());
        cp = col.data();
      }
      for (int o = 0; o < OG; ++o) {
        const int oc = grp * OG + o;
        double* orow = out.data() + (static_cast<std::size_t>(n) * g.out_c + oc) * P;
        const double b = bias.defined() ? bias.value()[oc] : 0.0;
        std::fill(orow, orow + P, b);
        const double* wrow = wv.data() + static_cast<std::size_t>(oc) * K;
        for (int k = 0; k < K; ++k) {
          const double a = wrow[k];
          const double* crow = cp + static_cast<std::size_t>(k) * P;
          for (int p = 0; p < P; ++p) orow[p] += a * crow[p];
        }
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Var::from_op(std::move(out), std::move(inputs), [g, has_bias](Node& self) {
    Node& xn_node = *self.inputs[0];
    Node& w_node = *self.inputs[1];
    const Tensor& xv = xn_node.value;
    const Tensor& wv = w_node.value;
    const Tensor& dy = self.grad;
    const int K = g.k();
    const int P = g.p();
    const int OG = g.og();
    Tensor* dw = w_node.requires_grad ? &w_node.grad_buffer() : nullptr;
    Tensor* dx = xn_node.requires_grad ? &xn_node.grad_buffer() : nullptr;
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (int n = 0; n < g.n; ++n)
        for (int o = 0; o < g.out_c; ++o) {
          const double* row = dy.data() + (static_cast<std::size_t>(n) * g.out_c + o) * P;
          double s = 0.0;
          for (int p = 0; p < P; ++p) s += row[p];
          db[o] += s;
        }
    }
    std::vector<double> col(g.direct() ? 0 : static_cast<std::size_t>(K) * P);
    std::vector<double> dcol(dx && !g.direct() ? static_cast<std::size_t>(K) * P : 0);
    for (int n = 0; n < g.n; ++n) {
      const double* xs = xv.data() + static_cast<std::size_t>(n) * g.c * g.h * g.w;
      double* dxs = dx ? dx->data() + static_cast<std::size_t>(n) * g.c * g.h * g.w : nullptr;
      for (int grp = 0; grp < g.groups; ++grp) {
        const double* cp;
        if (g.direct()) {
          cp = xs + static_cast<std::size_t>(grp) * g.cg() * P;
        } else if (dw) {
          im2col(xs, g, grp, col.data());
          cp = col.data();
        } else {
          cp = nullptr;
        }
        double* dcp = nullptr;
        if (dx) {
          if (g.direct()) {
            dcp = dxs + static_cast<std::size_t>(grp) * g.cg() * P;
          } else {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            dcp = dcol.data();
          }
        }
        for (int o = 0; o < OG; ++o) {
          const int oc = grp * OG + o;
          const double* dyrow = dy.data() + (static_cast<std::size_t>(n) * g.out_c + oc) * P;
          const double* wrow = wv.data() + static_cast<std::size_t>(oc) * K;
          double* dwrow = dw ? dw->data() + static_cast<std::size_t>(oc) * K : nullptr;
          for (int k = 0; k < K; ++k) {
            if (dwrow) {
              const double* crow = cp + static_cast<std::size_t>(k) * P;
              double s = 0.0;
              for (int p = 0; p < P; ++p) s += dyrow[p] * crow[p];
              dwrow[k] += s;
            }
            if (dcp) {
              const double a = wrow[k];
              double* drow = dcp + static_cast<std::size_t>(k) * P;
              for (int p = 0; p < P; ++p) drow[p] += a * dyrow[p];
            }
          }
        }
        if (dx && !g.direct()) col2im_add(dcol.data(), g, grp, dxs);
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1), "linear: shape mismatch");
  const int n = xv.dim(0);
  const int f = xv.dim(1);
  const int o = wv.dim(0);
  Tensor out({n, o});
  for (int i = 0; i < n; ++i) {
    const double* xr = xv.data() + static_cast<std::size_t>(i) * f;
    for (int j = 0; j < o; ++j) {
      const double* wr = wv.data() + static_cast<std::size_t>(j) * f;
      double s = bias.defined() ? bias.value()[j] : 0.0;
      for (int k = 0; k < f; ++k) s += xr[k] * wr[k];
      out.at(i, j) = s;
    }
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Var::from_op(std::move(out), std::move(inputs), [n, f, o, has_bias](Node& self) {
    Node& xnode = *self.inputs[0];
    Node& wnode = *self.inputs[1];
    const Tensor& dy = self.grad;
    if (xnode.requires_grad) {
      Tensor& dx = xnode.grad_buffer();
      for (int i = 0; i < n; ++i) {
        double* dxr = dx.data() + static_cast<std::size_t>(i) * f;
        for (int j = 0; j < o; ++j) {
          const double g = dy.at(i, j);
          const double* wr = wnode.value.data() + static_cast<std::size_t>(j) * f;
          for (int k = 0; k < f; ++k) dxr[k] += g * wr[k];
        }
      }
    }
    if (wnode.requires_grad) {
      Tensor& dw = wnode.grad_buffer();
      for (int i = 0; i < n; ++i) {
        const double* xr = xnode.value.data() + static_cast<std::size_t>(i) * f;
        for (int j = 0; j < o; ++j) {
          const double g = dy.at(i, j);
          double* dwr = dw.data() + static_cast<std::size_t>(j) * f;
          for (int k = 0; k < f; ++k) dwr[k] += g * xr[k];
        }
      }
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor& db = self.inputs[2]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) db[j] += dy.at(i, j);
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState state, bool training) {
  const Tensor& xv = x.value();
  require(xv.rank() == 4, "batch_norm expects NCHW input");
  const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  require(gamma.value().numel() == static_cast<std::size_t>(c), "batch_norm: channel mismatch");
  const std::size_t m = static_cast<std::size_t>(n) * hw;
  std::vector<double> mean(c), invstd(c);
  if (training) {
    require(m > 0, "batch_norm: empty batch");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = xv.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int k = 0; k < hw; ++k) s += p[k];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = xv.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int k = 0; k < hw; ++k) v += (p[k] - mu) * (p[k] - mu);
      }
      const double var = v / static_cast<double>(m);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + state.eps);
      Tensor& rm = *state.running_mean;
      Tensor& rv = *state.running_var;
      const double unbiased = m > 1 ? v / static_cast<double>(m - 1) : var;
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
      rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = (*state.running_mean)[ch];
      invstd[ch] = 1.0 / std::sqrt((*state.running_var)[ch] + state.eps);
    }
  }
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * hw;
      const double gm = gamma.value()[ch], bt = beta.value()[ch];
      for (int k = 0; k < hw; ++k) {
        const double h = (xv[base + k] - mean[ch]) * invstd[ch];
        xhat[base + k] = h;
        out[base + k] = gm * h + bt;
      }
    }
  return Var::from_op(std::move(out), {x, gamma, beta},
                      [xhat = std::move(xhat), invstd = std::move(invstd), n, c, hw, m, training](Node& self) {
                        const Tensor& dy = self.grad;
                        Node& xnode = *self.inputs[0];
                        Node& gnode = *self.inputs[1];
                        Node& bnode = *self.inputs[2];
                        for (int ch = 0; ch < c; ++ch) {
                          double sdy = 0.0, sdyx = 0.0;
                          for (int i = 0; i < n; ++i) {
                            const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * hw;
                            for (int k = 0; k < hw; ++k) {
                              sdy += dy[base + k];
                              sdyx += dy[base + k] * xhat[base + k];
                            }
                          }
                          if (gnode.requires_grad) gnode.grad_buffer()[ch] += sdyx;
                          if (bnode.requires_grad) bnode.grad_buffer()[ch] += sdy;
                          if (!xnode.requires_grad) continue;
                          Tensor& dx = xnode.grad_buffer();
                          const double gm = gnode.value[ch];
                          const double md = static_cast<double>(m);
                          for (int i = 0; i < n; ++i) {
                            const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * hw;
                            for (int k = 0; k < hw; ++k) {
                              if (training) {
                                dx[base + k] += gm * invstd[ch] / md *
                                                (md * dy[base + k] - sdy - xhat[base + k] * sdyx);
                              } else {
                                dx[base + k] += gm * invstd[ch] * dy[base + k];
                              }
                            }
                          }
                        }
                      });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return std::pair{v > 0 ? v : 0.0, v > 0 ? 1.0 : 0.0}; });
}

Var relu6(const Var& x) {
  return unary(x, [](double v) {
    const double y = std::clamp(v, 0.0, 6.0);
    return std::pair{y, (v > 0 && v < 6) ? 1.0 : 0.0};
  });
}

Var sigmoid(const Var& x) {
  return unary(x, [](double v) {
    const double s = stable_sigmoid(v);
    return std::pair{s, s * (1.0 - s)};
  });
}

Var silu(const Var& x) {
  return unary(x, [](double v) {
    const double s = stable_sigmoid(v);
    return std::pair{v * s, s * (1.0 + v * (1.0 - s))};
  });
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    if (an.requires_grad) {
      Tensor& g = an.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      Tensor& g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  return unary(x, [factor](double v) { return std::pair{v * factor, factor}; });
}

Var add_scalar(const Var& x, double value) {
  return unary(x, [value](double v) { return std::pair{v + value, 1.0}; });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return Var::from_op(Tensor::scalar(s), {x}, [](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    Tensor& g = a.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

Var scale_channels(const Var& x, const Var& gates) {
  const Tensor& xv = x.value();
  const Tensor& sv = gates.value();
  require(xv.rank() == 4 && sv.numel() == static_cast<std::size_t>(xv.dim(0)) * xv.dim(1),
          "scale_channels: gate shape mismatch");
  const std::size_t planes = static_cast<std::size_t>(xv.dim(0)) * xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor out = xv;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t k = 0; k < hw; ++k) out[p * hw + k] *= sv[p];
  return Var::from_op(std::move(out), {x, gates}, [planes, hw](Node& self) {
    Node& xn = *self.inputs[0];
    Node& sn = *self.inputs[1];
    const Tensor& dy = self.grad;
    if (xn.requires_grad) {
      Tensor& g = xn.grad_buffer();
      for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t k = 0; k < hw; ++k) g[p * hw + k] += dy[p * hw + k] * sn.value[p];
    }
    if (sn.requires_grad) {
      Tensor& g = sn.grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < hw; ++k) s += dy[p * hw + k] * xn.value[p * hw + k];
        g[p] += s;
      }
    }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
  const Tensor& xv = x.value();
  require(xv.rank() == 4, "max_pool2d expects NCHW input");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int oh = (h + 2 * padding - kernel) / stride + 1;
  const int ow = (w + 2 * padding - kernel) / stride + 1;
  require(oh >= 1 && ow >= 1, "max_pool2d: input smaller than window");
  Tensor out({n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  std::size_t o = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t where = base;
        for (int ki = 0; ki < kernel; ++ki) {
          const int iy = oy * stride - padding + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const int ix = ox * stride - padding + kj;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
            if (xv[idx] > best) {
              best = xv[idx];
              where = idx;
            }
          }
        }
        out[o] = best;
        argmax[o] = where;
      }
  }
  return Var::from_op(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    Tensor& g = a.grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
}

Var adaptive_avg_pool2d(const Var& x, int out_h, int out_w) {
  const Tensor& xv = x.value();
  require(xv.rank() == 4, "adaptive_avg_pool2d expects NCHW input");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  auto start = [](int i, int in, int out) { return (i * in) / out; };
  auto stop = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
  Tensor out({n, c, out_h, out_w});
  for (int plane = 0; plane < n * c; ++plane) {
    const double* src = xv.data() + static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const int y0 = start(oy, h, out_h), y1 = stop(oy, h, out_h);
        const int x0 = start(ox, w, out_w), x1 = stop(ox, w, out_w);
        double s = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) s += src[static_cast<std::size_t>(y) * w + xx];
        out[(static_cast<std::size_t>(plane) * out_h + oy) * out_w + ox] = s / ((y1 - y0) * (x1 - x0));
      }
  }
  return Var::from_op(std::move(out), {x}, [=](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    Tensor& g = a.grad_buffer();
    for (int plane = 0; plane < n * c; ++plane) {
      double* dst = g.data() + static_cast<std::size_t>(plane) * h * w;
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const int y0 = start(oy, h, out_h), y1 = stop(oy, h, out_h);
          const int x0 = start(ox, w, out_w), x1 = stop(ox, w, out_w);
          const double share = self.grad[(static_cast<std::size_t>(plane) * out_h + oy) * out_w + ox] /
                               ((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) dst[static_cast<std::size_t>(y) * w + xx] += share;
        }
    }
  });
}

Var flatten(const Var& x) {
  const Tensor& xv = x.value();
  const int n = xv.dim(0);
  const int rest = n == 0 ? 0 : static_cast<int>(xv.numel() / static_cast<std::size_t>(n));
  return Var::from_op(xv.reshaped({n, rest}), {x}, [](Node& self) {
    Node& a = *self.inputs[0];
    if (!a.requires_grad) return;
    Tensor& g = a.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  const double keep = 1.0 - p;
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, Var::constant(std::move(mask)));
}

Var stochastic_depth(const Var& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  const double keep = 1.0 - p;
  const int n = x.value().dim(0);
  const std::size_t per = x.value().numel() / static_cast<std::size_t>(n);
  Tensor mask(x.shape());
  for (int i = 0; i < n; ++i) {
    const double m = keep > 0.0 && rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    std::fill(mask.data() + i * per, mask.data() + (i + 1) * per, m);
  }
  return mul(x, Var::constant(std::move(mask)));
}

Tensor softmax_rows(const Tensor& logits) {
  require(logits.rank() == 2, "softmax_rows expects a matrix");
  Tensor out(logits.shape());
  const int n = logits.dim(0), c = logits.dim(1);
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - mx);
    for (int j = 0; j < c; ++j) out.at(i, j) = std::exp(logits.at(i, j) - mx) / z;
  }
  return out;
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  require(lv.rank() == 2 && static_cast<std::size_t>(lv.dim(0)) == targets.size() && !targets.empty(),
          "cross_entropy: logits rows must match targets");
  const int n = lv.dim(0), c = lv.dim(1);
  Tensor probs = softmax_rows(lv);
  double loss = 0.0;
  std::vector<int> t(targets.begin(), targets.end());
  for (int i = 0; i < n; ++i) {
    require(t[i] >= 0 && t[i] < c, "cross_entropy: target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, lv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(lv.at(i, j) - mx);
    loss += mx + std::log(z) - lv.at(i, t[i]);
  }
  loss /= n;
  return Var::from_op(Tensor::scalar(loss), {logits},
                      [probs = std::move(probs), t = std::move(t), n, c](Node& self) {
                        Node& a = *self.inputs[0];
                        if (!a.requires_grad) return;
                        Tensor& g = a.grad_buffer();
                        const double up = self.grad[0] / n;
                        for (int i = 0; i < n; ++i)
                          for (int j = 0; j < c; ++j)
                            g.at(i, j) += up * (probs.at(i, j) - (j == t[i] ? 1.0 : 0.0));
                      });
}

}  // namespace padens::nn
