// Compares backbone features with torchvision on randomly initialised
// weights exported by tools/export_torchvision_weights.py --parity.
// Exit 77 (skip) when the export directory holds no parity files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "padens/archive.hpp"
#include "padens/model.hpp"
#include "padens/nn/autograd.hpp"

using namespace padens;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: torchvision_parity <export-dir> [arch...]\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::vector<std::string> archs;
  for (int i = 2; i < argc; ++i) archs.emplace_back(argv[i]);
  if (archs.empty()) archs = {"resnet34", "resnet50", "vgg16", "efficientnet_b0", "mobilenet_v2"};

  BuiltinProvider provider(dir);
  int checked = 0;
  int failed = 0;
  for (const auto& arch : archs) {
    const auto ref_path = dir / (arch + ".parity.pdw");
    if (!std::filesystem::exists(ref_path)) {
      std::cout << "SKIP " << arch << " (no reference export)\n";
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Archive ref = read_archive(ref_path);
    const nn::Tensor& input = ref.tensors.at(0).tensor;
    const nn::Tensor& expected = ref.tensors.at(1).tensor;
    auto backbone = provider.create(arch, true, 0);
    backbone->set_training(false);
    nn::NoGradGuard guard;
    const nn::Tensor got = backbone->features(nn::Var::constant(input)).value();
    double max_err = 0.0;
    double max_ref = 0.0;
    bool shape_ok = got.shape() == expected.shape();
    if (shape_ok) {
      for (std::size_t i = 0; i < got.values().size(); ++i) {
        max_err = std::max(max_err, std::abs(got.values()[i] - expected.values()[i]));
        max_ref = std::max(max_ref, std::abs(expected.values()[i]));
      }
    }
    const double rel = max_err / std::max(max_ref, 1e-12);
    const bool ok = shape_ok && rel <= 1e-9;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-16s shape %s vs %s, max rel err %.3g (%.1fs)\n", ok ? "PASS" : "FAIL", arch.c_str(),
                nn::shape_string(got.shape()).c_str(), nn::shape_string(expected.shape()).c_str(), rel, secs);
    ++checked;
    failed += ok ? 0 : 1;
  }
  if (checked == 0) return 77;
  return failed == 0 ? 0 : 1;
}
