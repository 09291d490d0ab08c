#include "skinsplat/ssim.hpp"

#include "skinsplat/error.hpp"

#include <cmath>
#include <vector>

namespace skinsplat {

namespace {

using Plane = Eigen::ArrayXXd;  // rows = y, cols = x

std::vector<double> gaussian_window(const SsimSettings& s) {
  std::vector<double> w(static_cast<std::size_t>(s.window));
  const double c = (s.window - 1) / 2.0;
  double sum = 0.0;
  for (int k = 0; k < s.window; ++k) sum += w[static_cast<std::size_t>(k)] = std::exp(-(k - c) * (k - c) / (2 * s.sigma * s.sigma));
  for (double& v : w) v /= sum;
  return w;
}

Plane channel(const Image& img, int c) {
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p(y, x) = img.rgb(c, img.index(x, y));
  return p;
}

// Separable correlation keeping only fully contained windows.
Plane filter_valid(const Plane& in, const std::vector<double>& w) {
  const auto n = static_cast<Eigen::Index>(w.size());
  const Eigen::Index ho = in.rows() - n + 1, wo = in.cols() - n + 1;
  Plane tmp = Plane::Zero(in.rows(), wo);
  for (Eigen::Index k = 0; k < n; ++k) tmp += w[static_cast<std::size_t>(k)] * in.middleCols(k, wo);
  Plane out = Plane::Zero(ho, wo);
  for (Eigen::Index k = 0; k < n; ++k) out += w[static_cast<std::size_t>(k)] * tmp.middleRows(k, ho);
  return out;
}

// Adjoint of filter_valid.
Plane filter_adjoint(const Plane& g, const std::vector<double>& w, Eigen::Index rows, Eigen::Index cols) {
  const auto n = static_cast<Eigen::Index>(w.size());
  Plane tmp = Plane::Zero(rows, g.cols());
  for (Eigen::Index k = 0; k < n; ++k) tmp.middleRows(k, g.rows()) += w[static_cast<std::size_t>(k)] * g;
  Plane out = Plane::Zero(rows, cols);
  for (Eigen::Index k = 0; k < n; ++k) out.middleCols(k, g.cols()) += w[static_cast<std::size_t>(k)] * tmp;
  return out;
}

}  // namespace

double ssim_with_gradient(const Image& a, const Image& b, Image* d_a, const SsimSettings& settings) {
  require(a.same_shape(b), ErrorCode::InvalidInput, "ssim inputs differ in size");
  require(settings.window >= 1 && settings.sigma > 0.0, ErrorCode::InvalidInput, "invalid ssim window");
  require(a.width >= settings.window && a.height >= settings.window, ErrorCode::InvalidInput,
          "images must be at least " + std::to_string(settings.window) + " pixels in each dimension for ssim");
  const std::vector<double> w = gaussian_window(settings);
  const double c1 = std::pow(settings.k1 * settings.dynamic_range, 2);
  const double c2 = std::pow(settings.k2 * settings.dynamic_range, 2);
  const Eigen::Index ho = a.height - settings.window + 1, wo = a.width - settings.window + 1;
  const double count = 3.0 * static_cast<double>(ho * wo);
  if (d_a) *d_a = Image(a.width, a.height);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Plane x = channel(a, c), y = channel(b, c);
    const Plane mx = filter_valid(x, w), my = filter_valid(y, w);
    const Plane exx = filter_valid(x * x, w), eyy = filter_valid(y * y, w), exy = filter_valid(x * y, w);
    const Plane a1 = 2 * mx * my + c1;
    const Plane a2 = 2 * (exy - mx * my) + c2;
    const Plane b1 = mx * mx + my * my + c1;
    const Plane b2 = (exx - mx * mx) + (eyy - my * my) + c2;
    const Plane s = (a1 * a2) / (b1 * b2);
    total += s.sum();
    if (!d_a) continue;
    // Partials of s w.r.t. the window statistics mx, E[x^2], E[xy].
    const Plane d_exx = -s / b2;
    const Plane d_exy = 2 * a1 / (b1 * b2);
    const Plane d_mx = (2 * my * a2 - 2 * my * a1) / (b1 * b2) - s * (2 * mx / b1 - 2 * mx / b2);
    const Plane ga = filter_adjoint(d_mx, w, x.rows(), x.cols());
    const Plane gb = filter_adjoint(d_exx, w, x.rows(), x.cols());
    const Plane gc = filter_adjoint(d_exy, w, x.rows(), x.cols());
    const Plane g = (ga + 2 * x * gb + y * gc) / count;
    for (int py = 0; py < a.height; ++py)
      for (int px = 0; px < a.width; ++px) d_a->rgb(c, d_a->index(px, py)) = g(py, px);
  }
  return total / count;
}

double ssim(const Image& a, const Image& b, const SsimSettings& settings) {
  return ssim_with_gradient(a, b, nullptr, settings);
}

Image crop(const Image& image, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && w >= 0 && h >= 0 && x0 + w <= image.width && y0 + h <= image.height,
          ErrorCode::InvalidInput, "crop rectangle outside the image");
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.pixel(x, y) = image.pixel(x0 + x, y0 + y);
  return out;
}

}  // namespace skinsplat
