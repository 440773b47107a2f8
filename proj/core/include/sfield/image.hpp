#pragma once

#include <filesystem>
#include <vector>

#include "sfield/common.hpp"

namespace sfield {

// RGB image, float channels in [0,1], row-major interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height * 3

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero());

  Vec3 pixel(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return Vec3(data[i], data[i + 1], data[i + 2]);
  }
  void set_pixel(int x, int y, const Vec3& c) {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    data[i] = static_cast<float>(c.x());
    data[i + 1] = static_cast<float>(c.y());
    data[i + 2] = static_cast<float>(c.z());
  }
};

// 8-bit RGB PNG round trip. Writing quantizes with round(clamp(v)*255), so a
// write/load round trip moves each channel by at most 1/510.
void save_png_rgb8(const Image& image, const std::filesystem::path& path);
Image load_png_rgb8(const std::filesystem::path& path);

// 16-bit grayscale PNG, values clamped to [0,1] before quantization.
void save_png_gray16(const std::vector<float>& values, int width, int height,
                     const std::filesystem::path& path);

}  // namespace sfield
