#pragma once

#include <cstdint>
#include <memory>

#include "padens/model.hpp"

namespace padens::backbones {

std::unique_ptr<Backbone> make_tiny_test_net(std::uint64_t seed);
std::unique_ptr<Backbone> make_resnet(int depth, std::uint64_t seed);
std::unique_ptr<Backbone> make_vgg16(std::uint64_t seed);
std::unique_ptr<Backbone> make_mobilenet_v2(std::uint64_t seed);
std::unique_ptr<Backbone> make_efficientnet_b0(std::uint64_t seed);

}  // namespace padens::backbones
