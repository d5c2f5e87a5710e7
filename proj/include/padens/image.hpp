#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "padens/label.hpp"

namespace padens {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB raster, row-major, channels interleaved.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, Rgb fill = {0, 0, 0});
  Image(int height, int width, std::vector<std::uint8_t> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  Rgb pixel(int y, int x) const { return {at(y, x, 0), at(y, x, 1), at(y, x, 2)}; }
  void set_pixel(int y, int x, Rgb v) {
    for (int c = 0; c < kChannels; ++c) at(y, x, c) = v[c];
  }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct ImageSample {
  std::string id;
  Image image;
  std::optional<Label> label;

  bool operator==(const ImageSample&) const = default;
};

// Decodes PNG/JPEG/BMP into RGB; grayscale is replicated to three channels.
Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace padens
