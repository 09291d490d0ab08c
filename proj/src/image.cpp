#include "skinsplat/image.hpp"

#include "skinsplat/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace skinsplat {

Image::Image(int w, int h, const Vector3& fill) : width(w), height(h) {
  require(w >= 1 && h >= 1, ErrorCode::InvalidInput, "image dimensions must be positive");
  rgb.resize(3, static_cast<Eigen::Index>(w) * h);
  rgb.colwise() = fill;
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1)); }

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<unsigned char> encode_png_raw(const std::uint8_t* data, int width, int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  require(png_image_write_to_memory(&img, nullptr, &size, 0, data, 0, nullptr) != 0, ErrorCode::Io,
          std::string("png sizing failed: ") + img.message);
  std::vector<unsigned char> out(size);
  require(png_image_write_to_memory(&img, out.data(), &size, 0, data, 0, nullptr) != 0, ErrorCode::Io,
          std::string("png encoding failed: ") + img.message);
  out.resize(size);
  return out;
}

void write_bytes(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> decode_png(const std::filesystem::path& path, png_uint_32 format, int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&img, path.c_str()) != 0, ErrorCode::Io,
          "cannot read png " + path.string() + ": " + img.message);
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw Error(ErrorCode::Io, "cannot decode png " + path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buffer;
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes(image.pixel_count() * 3);
  for (std::size_t i = 0; i < image.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) bytes[3 * i + static_cast<std::size_t>(c)] = to_byte(image.rgb(c, static_cast<Eigen::Index>(i)));
  return encode_png_raw(bytes.data(), image.width, image.height, PNG_FORMAT_RGB);
}

void write_png(const Image& image, const std::filesystem::path& path) { write_bytes(encode_png(image), path); }

Image read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto bytes = decode_png(path, PNG_FORMAT_RGB, w, h);
  Image image(w, h);
  for (std::size_t i = 0; i < image.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) image.rgb(c, static_cast<Eigen::Index>(i)) = bytes[3 * i + static_cast<std::size_t>(c)] / 255.0;
  return image;
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(mask.values.size());
  std::transform(mask.values.begin(), mask.values.end(), bytes.begin(), [](std::uint8_t v) { return v ? 255 : 0; });
  write_bytes(encode_png_raw(bytes.data(), mask.width, mask.height, PNG_FORMAT_GRAY), path);
}

Mask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto bytes = decode_png(path, PNG_FORMAT_GRAY, w, h);
  Mask mask(w, h);
  std::transform(bytes.begin(), bytes.end(), mask.values.begin(), [](std::uint8_t v) { return v >= 128 ? 1 : 0; });
  return mask;
}

void write_pfm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << "PF\n" << image.width << ' ' << image.height << "\n-1.0\n";
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = static_cast<float>(image.pixel(x, y)(c));
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  require(magic == "PF" && w > 0 && h > 0, ErrorCode::Io, path.string() + " is not a color PFM");
  require(scale < 0.0, ErrorCode::Io, "big-endian PFM is not supported");
  Image image(w, h);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = 0.0f;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        image.pixel(x, y)(c) = v;
      }
    }
  }
  require(in.good(), ErrorCode::Io, "truncated PFM " + path.string());
  return image;
}

Image read_image(const std::filesystem::path& path) {
  return path.extension() == ".pfm" ? read_pfm(path) : read_png(path);
}

double psnr(const Image& a, const Image& b) {
  require(a.same_shape(b), ErrorCode::InvalidInput, "psnr of differently sized images");
  const double mse = (a.rgb - b.rgb).squaredNorm() / static_cast<double>(a.rgb.size());
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

}  // namespace skinsplat
