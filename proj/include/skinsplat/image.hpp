#pragma once

#include "skinsplat/geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace skinsplat {

/// Linear RGB image with float64 channels in [0,1], pixels stored column-wise
/// in row-major pixel order (index = y * width + x).
struct Image {
  int width = 0;
  int height = 0;
  Eigen::Matrix<double, 3, Eigen::Dynamic> rgb;
  Eigen::VectorXd alpha;  // accumulated opacity, empty when not tracked

  Image() = default;
  Image(int w, int h, const Vector3& fill = Vector3::Zero());

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
  auto pixel(int x, int y) { return rgb.col(index(x, y)); }
  auto pixel(int x, int y) const { return rgb.col(index(x, y)); }
  bool same_shape(const Image& other) const { return width == other.width && height == other.height; }
};

/// Binary per-pixel mask, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0) {}
  bool at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

void write_png(const Image& image, const std::filesystem::path& path);
std::vector<unsigned char> encode_png(const Image& image);
Image read_png(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

/// Portable float map (color, little endian), bottom-to-top rows per the format.
void write_pfm(const Image& image, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

/// Reads .pfm or .png by extension.
Image read_image(const std::filesystem::path& path);

double psnr(const Image& a, const Image& b);

}  // namespace skinsplat
