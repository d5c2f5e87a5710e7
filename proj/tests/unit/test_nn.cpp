#include <doctest.h>

#include <cmath>
#include <functional>

#include "padens/nn/autograd.hpp"
#include "padens/nn/module.hpp"
#include "padens/nn/ops.hpp"
#include "padens/nn/sgd.hpp"
#include "padens/rng.hpp"

using namespace padens;
using namespace padens::nn;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Central differences on every entry of every input against backward().
double max_grad_error(const std::function<Var(std::vector<Var>&)>& f, std::vector<Tensor> inputs,
                      double eps = 1e-6) {
  std::vector<Var> vars;
  for (auto& t : inputs) vars.push_back(Var::parameter(t));
  Var out = f(vars);
  backward(out);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          probe.push_back(Var::constant(t));
        }
        return f(probe).value()[0];
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      const double analytic = vars[k].grad().empty() ? 0.0 : vars[k].grad()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

// Weighted sum so every output element gets a distinct upstream gradient.
Var weighted(const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, Var::constant(random_tensor(rng, y.shape()))));
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 1.5);
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1, 2, 3}));
    CHECK(shape_string({2, 3}) == "[2,3]");
    CHECK(Tensor(Shape{}, 2.0).numel() == 1);
  }

  TEST_CASE("conv2d gradients, strided, padded and grouped") {
    Rng rng(1);
    for (auto [stride, padding, groups] : {std::tuple{1, 1, 1}, {2, 0, 1}, {2, 1, 2}, {1, 0, 4}}) {
      const int cin = 4;
      const double err = max_grad_error(
          [&](std::vector<Var>& v) { return weighted(conv2d(v[0], v[1], v[2], {stride, padding, groups}), 7); },
          {random_tensor(rng, {2, cin, 5, 6}), random_tensor(rng, {4, cin / groups, 3, 3}), random_tensor(rng, {4})});
      CHECK(err < 1e-6);
    }
    const double err1x1 = max_grad_error(
        [&](std::vector<Var>& v) { return weighted(conv2d(v[0], v[1], Var(), {}), 3); },
        {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {5, 3, 1, 1})});
    CHECK(err1x1 < 1e-6);
  }

  TEST_CASE("conv2d matches a direct loop") {
    Rng rng(2);
    Tensor x = random_tensor(rng, {1, 2, 4, 5});
    Tensor w = random_tensor(rng, {3, 2, 3, 3});
    Tensor y = conv2d(Var::constant(x), Var::constant(w), Var(), {2, 1, 1}).value();
    REQUIRE(y.shape() == Shape{1, 3, 2, 3});
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) {
          double acc = 0;
          for (int c = 0; c < 2; ++c)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) {
                const int yy = i * 2 - 1 + a;
                const int xx = j * 2 - 1 + b;
                if (yy < 0 || yy >= 4 || xx < 0 || xx >= 5) continue;
                acc += x.at(0, c, yy, xx) * w.at(o, c, a, b);
              }
          CHECK(y.at(0, o, i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
  }

  TEST_CASE("elementwise, pooling and loss gradients") {
    Rng rng(3);
    auto check = [&](const std::function<Var(std::vector<Var>&)>& f, std::vector<Tensor> in) {
      CHECK(max_grad_error(f, std::move(in)) < 1e-6);
    };
    const Shape s{2, 3, 4, 4};
    check([](auto& v) { return weighted(relu(v[0]), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(relu6(scale(v[0], 8.0)), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(sigmoid(v[0]), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(silu(v[0]), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(add(v[0], v[1]), 1); }, {random_tensor(rng, s), random_tensor(rng, s)});
    check([](auto& v) { return weighted(mul(v[0], v[1]), 1); }, {random_tensor(rng, s), random_tensor(rng, s)});
    check([](auto& v) { return weighted(add_scalar(v[0], 0.3), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(scale_channels(v[0], v[1]), 1); },
          {random_tensor(rng, s), random_tensor(rng, {2, 3, 1, 1})});
    check([](auto& v) { return weighted(max_pool2d(v[0], 3, 2, 1), 1); }, {random_tensor(rng, {1, 2, 5, 5})});
    check([](auto& v) { return weighted(adaptive_avg_pool2d(v[0], 2, 3), 1); }, {random_tensor(rng, {1, 2, 5, 7})});
    check([](auto& v) { return weighted(flatten(v[0]), 1); }, {random_tensor(rng, s)});
    check([](auto& v) { return weighted(linear(v[0], v[1], v[2]), 1); },
          {random_tensor(rng, {3, 4}), random_tensor(rng, {2, 4}), random_tensor(rng, {2})});
    const std::vector<int> targets{0, 2, 1};
    check([&](auto& v) { return cross_entropy(v[0], targets); }, {random_tensor(rng, {3, 3}, -3, 3)});
  }

  TEST_CASE("batch norm: gradients in training mode, running statistics") {
    Rng rng(4);
    Tensor rm({3}, 0.0);
    Tensor rv({3}, 1.0);
    const double err = max_grad_error(
        [&](std::vector<Var>& v) {
          Tensor m = rm;
          Tensor var = rv;
          return weighted(batch_norm(v[0], v[1], v[2], {&m, &var, 0.1, 1e-5}, true), 5);
        },
        {random_tensor(rng, {4, 3, 2, 2}), random_tensor(rng, {3}), random_tensor(rng, {3})});
    CHECK(err < 1e-5);

    // Running update: 0.9 * old + 0.1 * batch stat, unbiased variance.
    Tensor x = random_tensor(rng, {2, 1, 2, 2});
    Tensor m({1}, 0.0);
    Tensor var({1}, 1.0);
    batch_norm(Var::constant(x), Var::constant(Tensor({1}, 1.0)), Var::constant(Tensor({1}, 0.0)),
               {&m, &var, 0.1, 1e-5}, true);
    double mean = 0;
    for (double v : x.values()) mean += v / 8;
    double ss = 0;
    for (double v : x.values()) ss += (v - mean) * (v - mean);
    CHECK(m[0] == doctest::Approx(0.1 * mean).epsilon(1e-12));
    CHECK(var[0] == doctest::Approx(0.9 + 0.1 * ss / 7).epsilon(1e-12));

    // Eval mode uses the running estimates.
    Tensor y = batch_norm(Var::constant(x), Var::constant(Tensor({1}, 2.0)), Var::constant(Tensor({1}, 0.5)),
                          {&m, &var, 0.1, 1e-5}, false)
                   .value();
    CHECK(y[3] == doctest::Approx(2.0 * (x[3] - m[0]) / std::sqrt(var[0] + 1e-5) + 0.5).epsilon(1e-12));
  }

  TEST_CASE("softmax rows and cross entropy are stable") {
    Tensor logits({2, 3}, std::vector<double>{1000, 0, 0, 1, 2, 3});
    Tensor p = softmax_rows(logits);
    CHECK(p.at(0, 0) == doctest::Approx(1.0));
    CHECK(p.at(1, 2) == doctest::Approx(0.66524).epsilon(1e-4));
    const std::vector<int> t{0, 2};
    const double loss = cross_entropy(Var::constant(logits), t).value()[0];
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(0.5 * -std::log(p.at(1, 2))).epsilon(1e-9));
  }

  TEST_CASE("dropout and stochastic depth are identity in eval mode") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {4, 2, 2, 2});
    CHECK(dropout(Var::constant(x), 0.5, rng, false).value() == x);
    CHECK(stochastic_depth(Var::constant(x), 0.5, rng, false).value() == x);
    Tensor d = dropout(Var::constant(x), 0.5, rng, true).value();
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK((d[i] == 0.0 || d[i] == doctest::Approx(2 * x[i])));
  }

  TEST_CASE("no-grad mode records no graph") {
    Var p = Var::parameter(Tensor({2}, 1.0));
    {
      NoGradGuard guard;
      Var y = scale(p, 2.0);
      CHECK_FALSE(y.requires_grad());
    }
    CHECK(scale(p, 2.0).requires_grad());
  }

  TEST_CASE("sgd momentum follows the closed-form linear recurrence") {
    // f(p) = a/2 (p - c)^2. State (e = p - c, v) evolves by a fixed 2x2 matrix.
    const double a = 3.0, c = 0.7, lr = 0.001, m = 0.9;
    Var p = Var::parameter(Tensor({1}, 2.5));
    Sgd opt({p}, lr, m);
    const double M[2][2] = {{1 - lr * a, -lr * m}, {a, m}};
    double power[2][2] = {{1, 0}, {0, 1}};
    const double e0 = 2.5 - c;
    for (int step = 1; step <= 10; ++step) {
      opt.zero_grad();
      Var diff = add_scalar(p, -c);
      backward(scale(mul(diff, diff), a / 2));
      opt.step();
      double next[2][2];
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) next[i][j] = M[i][0] * power[0][j] + M[i][1] * power[1][j];
      std::copy(&next[0][0], &next[0][0] + 4, &power[0][0]);
      CHECK(std::abs(p.value()[0] - (c + power[0][0] * e0)) < 1e-9);
      CHECK(std::abs(opt.velocity()[0][0] - power[1][0] * e0) < 1e-9);
    }
  }

  TEST_CASE("sgd validates hyperparameters") {
    Var p = Var::parameter(Tensor({1}, 0.0));
    CHECK_THROWS(Sgd({p}, 0.0, 0.9));
    CHECK_THROWS(Sgd({p}, 0.1, 1.0));
    CHECK_THROWS(Sgd({p}, 0.1, -0.1));
  }

  TEST_CASE("module names follow dotted hierarchy") {
    Rng rng(6);
    auto block = conv_norm_act({3, 4, 3, 1, 1}, Activation::kReLU, rng);
    std::vector<std::string> names;
    for (auto& p : block->named_parameters()) names.push_back(p.name);
    CHECK(names == std::vector<std::string>{"0.weight", "1.weight", "1.bias"});
    std::vector<std::string> buffers;
    for (auto& b : block->named_buffers()) buffers.push_back(b.name);
    CHECK(buffers == std::vector<std::string>{"1.running_mean", "1.running_var", "1.num_batches_tracked"});
  }
}
