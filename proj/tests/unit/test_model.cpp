#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "padens/archive.hpp"
#include "padens/error.hpp"
#include "padens/model.hpp"
#include "padens/nn/ops.hpp"
#include "test_support.hpp"

using namespace padens;
using padens::testing::TempDir;

namespace {

const BuiltinProvider& offline() {
  static const BuiltinProvider p(std::nullopt);
  return p;
}

Classifier tiny(std::uint64_t seed = 1) {
  return build_classifier(default_backbone_spec("tiny_test_net", false, offline()), 3, seed, offline());
}

Corpus batch(Rng& rng, int n, int h, int w) {
  Corpus out;
  for (int i = 0; i < n; ++i) out.push_back({"b" + std::to_string(i), testing::random_image(rng, h, w), Label::kBenign});
  return out;
}

// Gives every tiny_test_net tensor non-trivial values, including BN statistics.
void randomize(Classifier& c, Rng& rng) {
  auto state = c.state();
  for (auto& t : state) {
    const bool var = t.name.find("running_var") != std::string::npos;
    for (double& v : t.tensor.values()) v = var ? rng.uniform(0.5, 1.5) : rng.uniform(-0.5, 0.5);
  }
  c.load_state(state);
}

std::map<std::string, nn::Tensor> by_name(const std::vector<NamedTensor>& state) {
  std::map<std::string, nn::Tensor> m;
  for (const auto& t : state) m[t.name] = t.tensor;
  return m;
}

using Grid = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]

Grid conv3x3(const Grid& in, const nn::Tensor& w) {
  const int cin = static_cast<int>(in.size()), h = static_cast<int>(in[0].size()), wd = static_cast<int>(in[0][0].size());
  const int cout = w.dim(0);
  Grid out(cout, std::vector<std::vector<double>>(h, std::vector<double>(wd, 0.0)));
  for (int o = 0; o < cout; ++o)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x) {
        double acc = 0;
        for (int c = 0; c < cin; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              acc += in[c][yy][xx] * w.at(o, c, dy + 1, dx + 1);
            }
        out[o][y][x] = acc;
      }
  return out;
}

void bn_relu(Grid& g, const std::map<std::string, nn::Tensor>& s, const std::string& p) {
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double mean = s.at(p + "running_mean")[c], var = s.at(p + "running_var")[c];
    const double gamma = s.at(p + "weight")[c], beta = s.at(p + "bias")[c];
    for (auto& row : g[c])
      for (auto& v : row) v = std::max(0.0, gamma * (v - mean) / std::sqrt(var + 1e-5) + beta);
  }
}

// Independent evaluation of the stub: conv-bn-relu, 2x2 max pool,
// conv-bn-relu, global mean, affine head.
std::vector<double> tiny_oracle(const Image& img, const std::map<std::string, nn::Tensor>& s) {
  Grid g(3, std::vector<std::vector<double>>(img.height(), std::vector<double>(img.width())));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) g[c][y][x] = (img.at(y, x, c) / 255.0 - 0.5) / 0.5;
  g = conv3x3(g, s.at("backbone.features.0.weight"));
  bn_relu(g, s, "backbone.features.1.");
  Grid pooled(g.size(), std::vector<std::vector<double>>(img.height() / 2, std::vector<double>(img.width() / 2)));
  for (std::size_t c = 0; c < g.size(); ++c)
    for (int y = 0; y < img.height() / 2; ++y)
      for (int x = 0; x < img.width() / 2; ++x)
        pooled[c][y][x] = std::max({g[c][2 * y][2 * x], g[c][2 * y][2 * x + 1], g[c][2 * y + 1][2 * x],
                                    g[c][2 * y + 1][2 * x + 1]});
  g = conv3x3(pooled, s.at("backbone.features.4.weight"));
  bn_relu(g, s, "backbone.features.5.");
  std::vector<double> feat(g.size(), 0.0);
  for (std::size_t c = 0; c < g.size(); ++c) {
    for (const auto& row : g[c])
      for (double v : row) feat[c] += v;
    feat[c] /= static_cast<double>(g[c].size() * g[c][0].size());
  }
  const auto& w = s.at("head.weight");
  const auto& b = s.at("head.bias");
  std::vector<double> out(3);
  for (int k = 0; k < 3; ++k) {
    out[k] = b[k];
    for (std::size_t c = 0; c < feat.size(); ++c) out[k] += w.at(k, static_cast<int>(c)) * feat[c];
  }
  return out;
}

double batch_loss(Classifier& c, const nn::Tensor& input, const std::vector<int>& targets) {
  return nn::cross_entropy(c.logits(nn::Var::constant(input)), targets).value()[0];
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("softmax examples") {
    const auto a = softmax(std::vector<double>{0, 0, 0});
    for (double v : a) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const auto b = softmax(std::vector<double>{1000, 0, 0});
    CHECK(b[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(b[1]));
    // exp-normalize evaluated directly on the small inputs.
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    const auto c = softmax(std::vector<double>{1, 2, 3});
    CHECK(std::abs(c[0] - 0.09003) < 1e-5);
    CHECK(std::abs(c[1] - 0.24473) < 1e-5);
    CHECK(std::abs(c[2] - 0.66524) < 1e-5);
    CHECK(c[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
    CHECK_THROWS_AS(softmax(std::vector<double>{1, std::numeric_limits<double>::quiet_NaN(), 0}), ValidationError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1, std::numeric_limits<double>::infinity(), 0}), ValidationError);
  }

  TEST_CASE("property: softmax sums to one, is positive and keeps the argmax") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> s(3);
      for (auto& v : s) v = rng.uniform(-50, 50);
      const auto p = softmax(s);
      double total = 0;
      for (double v : p) {
        CHECK(v > 0);
        total += v;
      }
      CHECK(std::abs(total - 1) < 1e-9);
      CHECK(std::max_element(p.begin(), p.end()) - p.begin() == std::max_element(s.begin(), s.end()) - s.begin());
      // Monotone: larger score, larger probability.
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (s[i] > s[j]) CHECK(p[i] >= p[j]);
    }
  }

  TEST_CASE("registry and provider errors") {
    const auto names = offline().architectures();
    for (const char* n : {"resnet34", "resnet50", "vgg16", "efficientnet_b0", "mobilenet_v2", "tiny_test_net"})
      CHECK(std::find(names.begin(), names.end(), n) != names.end());
    CHECK_THROWS_AS(build_classifier({"resnet9000", false, {}}, 3, 0, offline()), UnknownArchitecture);
    CHECK_THROWS_AS(build_classifier(default_backbone_spec("resnet34", true, offline()), 3, 0, offline()),
                    PretrainedUnavailable);
    TempDir dir("weights");
    const BuiltinProvider with_dir(dir.path());
    CHECK_THROWS_AS(with_dir.create("mobilenet_v2", true, 0), PretrainedUnavailable);
    CHECK_THROWS_AS(build_classifier(default_backbone_spec("tiny_test_net", false, offline()), 1, 0, offline()),
                    ValidationError);
    Normalization bad;
    bad.std[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK(offline().normalization("resnet50").mean[0] == doctest::Approx(0.485));
    CHECK(offline().normalization("tiny_test_net").std[2] == 0.5);
  }

  TEST_CASE("pretrained weights load from a weights directory") {
    TempDir dir("weights_ok");
    auto source = offline().create("mobilenet_v2", false, 99);
    Archive a;
    for (const auto& p : source->named_parameters()) a.tensors.push_back({p.name, p.var.value()});
    for (const auto& b : source->named_buffers()) a.tensors.push_back({b.name, *b.tensor});
    a.tensors.push_back({"classifier.1.weight", nn::Tensor({1000, 1280})});  // ignored head
    write_archive(dir.path() / "mobilenet_v2.pdw", a);
    const BuiltinProvider provider(dir.path());
    auto loaded = provider.create("mobilenet_v2", true, 5);
    const auto want = source->named_parameters();
    const auto got = loaded->named_parameters();
    REQUIRE(want.size() == got.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(want[i].var.value() == got[i].var.value());

    a.tensors.erase(a.tensors.begin());
    write_archive(dir.path() / "mobilenet_v2.pdw", a);
    CHECK_THROWS_AS(provider.create("mobilenet_v2", true, 5), CheckpointError);
  }

  TEST_CASE("real architectures emit three scores and are fully trainable") {
    Rng rng(2);
    const Corpus b = batch(rng, 2, 32, 32);
    for (const char* arch : {"resnet34", "resnet50", "efficientnet_b0", "mobilenet_v2"}) {
      CAPTURE(arch);
      Classifier c = build_classifier(default_backbone_spec(arch, false, offline()), 3, 3, offline());
      CHECK(c.all_trainable());
      const nn::Tensor s = forward(c, b);
      CHECK(s.shape() == nn::Shape{2, 3});
    }
  }

  TEST_CASE("forward shape contract and errors") {
    Rng rng(3);
    Classifier c = tiny();
    CHECK(c.all_trainable());
    CHECK(forward(c, batch(rng, 4, 8, 6)).shape() == nn::Shape{4, 3});
    CHECK(forward(c, Corpus{}).shape() == nn::Shape{0, 3});
    Corpus mixed = batch(rng, 2, 8, 8);
    mixed.push_back({"odd", Image(8, 7), std::nullopt});
    CHECK_THROWS_AS(forward(c, mixed), ValidationError);
  }

  TEST_CASE("forward is pure and leaves the training flag alone") {
    Rng rng(4);
    Classifier c = tiny();
    const Corpus b = batch(rng, 3, 6, 6);
    c.set_training(true);
    const auto a = forward(c, b);
    CHECK(forward(c, b) == a);
    CHECK(c.backbone().training());
  }

  TEST_CASE("tiny_test_net forward matches a hand evaluation") {
    Rng rng(5);
    Classifier c = tiny(7);
    randomize(c, rng);
    const Corpus b = batch(rng, 3, 6, 8);
    const nn::Tensor scores = forward(c, b);
    const auto state = by_name(c.state());
    for (int n = 0; n < 3; ++n) {
      const auto want = tiny_oracle(b[static_cast<std::size_t>(n)].image, state);
      for (int k = 0; k < 3; ++k) CHECK(scores.at(n, k) == doctest::Approx(want[k]).epsilon(1e-12));
    }
  }

  TEST_CASE("head initialization is deterministic given the seed") {
    CHECK(tiny(11).state() == tiny(11).state());
    CHECK_FALSE(tiny(11).state() == tiny(12).state());
  }

  TEST_CASE("tiny_test_net analytic gradients match central differences") {
    Rng rng(6);
    Classifier c = tiny(3);
    const Corpus b = batch(rng, 4, 8, 8);
    const nn::Tensor input = to_input_batch(b, c.spec().normalization);
    const std::vector<int> targets{0, 1, 2, 1};
    c.set_training(true);
    auto params = c.parameters();
    for (auto& p : params) p.var.zero_grad();
    nn::backward(nn::cross_entropy(c.logits(nn::Var::constant(input)), targets));
    std::map<std::string, nn::Tensor> analytic;
    for (auto& p : params) analytic[p.name] = p.var.grad();
    const double eps = 1e-5;
    int checked = 0;
    for (auto& p : params) {
      nn::Tensor& value = p.var.mutable_value();
      for (int k = 0; k < 6; ++k) {
        const std::size_t i = rng.below(value.numel());
        const double keep = value[i];
        value[i] = keep + eps;
        const double up = batch_loss(c, input, targets);
        value[i] = keep - eps;
        const double down = batch_loss(c, input, targets);
        value[i] = keep;
        const double numeric = (up - down) / (2 * eps);
        const double a = analytic[p.name][i];
        CAPTURE(p.name);
        CHECK(std::abs(a - numeric) <= 1e-3 * std::max(std::abs(a), std::abs(numeric)) + 1e-8);
        ++checked;
      }
    }
    CHECK(checked == 6 * static_cast<int>(params.size()));
  }

  TEST_CASE("every tiny_test_net parameter tensor influences the loss") {
    Rng rng(7);
    Classifier c = tiny(4);
    const Corpus b = batch(rng, 4, 8, 8);
    const nn::Tensor input = to_input_batch(b, c.spec().normalization);
    const std::vector<int> targets{2, 0, 1, 0};
    c.set_training(true);
    const double base = batch_loss(c, input, targets);
    for (auto& p : c.parameters()) {
      nn::Tensor& value = p.var.mutable_value();
      bool moved = false;
      for (std::size_t i = 0; i < value.numel() && !moved; ++i) {
        const double keep = value[i];
        value[i] = keep + 1e-3;
        moved = batch_loss(c, input, targets) != base;
        value[i] = keep;
      }
      CAPTURE(p.name);
      CHECK(moved);
    }
  }

  TEST_CASE("input normalization") {
    const Image img(1, 1, Rgb{255, 0, 51});
    const nn::Tensor t = to_input_batch(std::vector<Image>{img}, Normalization{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}});
    CHECK(t.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(t.at(0, 1, 0, 0) == doctest::Approx(-1.0));
    CHECK(t.at(0, 2, 0, 0) == doctest::Approx(-0.6));
  }
}

TEST_SUITE("archive") {
  TEST_CASE("round trip is bit-exact") {
    TempDir dir("archive");
    Archive a;
    a.metadata = {{"kind", "test"}, {"n", 3}};
    a.tensors.push_back({"w", nn::Tensor({2, 2}, std::vector<double>{0.1, -0.0, 1e-300, std::nextafter(1.0, 2.0)})});
    a.tensors.push_back({"scalar", nn::Tensor(nn::Shape{}, 7.0)});
    write_archive(dir.path() / "a.pdw", a);
    const Archive b = read_archive(dir.path() / "a.pdw");
    CHECK(b.metadata == a.metadata);
    CHECK(b.tensors == a.tensors);
    CHECK(std::signbit(b.tensors[0].tensor[1]));
  }

  TEST_CASE("corruption is detected") {
    TempDir dir("archive_bad");
    Archive a;
    a.tensors.push_back({"w", nn::Tensor({3}, 1.0)});
    const auto path = dir.path() / "a.pdw";
    write_archive(path, a);
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) { std::ofstream(path, std::ios::binary) << b; };

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    write(bad_magic);
    CHECK_THROWS_AS(read_archive(path), CheckpointError);

    std::string bad_version = bytes;
    bad_version[8] = 9;
    write(bad_version);
    CHECK_THROWS_WITH_AS(read_archive(path), doctest::Contains("version"), CheckpointError);

    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
      write(bytes.substr(0, cut));
      CHECK_THROWS_AS(read_archive(path), CheckpointError);
    }
    write(bytes + "x");
    CHECK_THROWS_AS(read_archive(path), CheckpointError);
    CHECK_THROWS_AS(read_archive(dir.path() / "missing.pdw"), CheckpointError);
  }
}
