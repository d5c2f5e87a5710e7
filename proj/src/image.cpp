#include "padens/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "padens/error.hpp"

namespace padens {

Image::Image(int height, int width, Rgb fill) : height_(height), width_(width) {
  if (height < 1 || width < 1)
    throw ValidationError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  pixels_.resize(static_cast<std::size_t>(height) * width * kChannels);
  for (std::size_t i = 0; i < pixels_.size(); i += kChannels) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

Image::Image(int height, int width, std::vector<std::uint8_t> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height < 1 || width < 1) throw ValidationError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * kChannels)
    throw ValidationError("pixel buffer does not match image dimensions");
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error("cannot decode image " + path.string());
  if (raw.depth() != CV_8U) {
    cv::Mat scaled;
    const double factor = raw.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    raw.convertTo(scaled, CV_8U, factor);
    raw = scaled;
  }
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw Error("unsupported channel count in " + path.string());
  }
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(rgb.rows) * rgb.cols * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3, pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return Image(rgb.rows, rgb.cols, std::move(pixels));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image " + path.string());
}

}  // namespace padens
