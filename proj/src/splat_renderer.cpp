#include "skinsplat/splat_renderer.hpp"

#include "skinsplat/error.hpp"
#include "skinsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skinsplat {

namespace {

struct TileGrid {
  int tiles_x = 0;
  int tiles_y = 0;
  int tile = 16;
  std::vector<std::vector<std::uint32_t>> lists;  // depth ranks per tile, front to back
};

// The fields compositing reads, stored contiguously in depth order.
struct RasterSplat {
  double mx, my;
  double conic_xx, conic_xy, conic_yy;
  double opacity;
  int x0, x1, y0, y1;
  std::uint32_t id;
};

struct Prepared {
  Projection projection;
  TileGrid grid;
  std::vector<std::uint32_t> order;  // splat ids sorted by depth
  std::vector<RasterSplat> raster;   // indexed by depth rank
};

Prepared prepare(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings) {
  require(settings.tile_size >= 1, ErrorCode::InvalidInput, "tile size must be positive");
  Prepared p;
  p.projection = project(scene, camera, settings);
  const auto& splats = p.projection.splats;
  p.order.resize(splats.size());
  std::iota(p.order.begin(), p.order.end(), 0u);
  // Equal depths keep scene order.
  std::sort(p.order.begin(), p.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return splats[a].depth < splats[b].depth || (splats[a].depth == splats[b].depth && a < b);
  });
  p.raster.reserve(splats.size());
  for (const std::uint32_t id : p.order) {
    const Splat2D& s = splats[id];
    p.raster.push_back({s.mean.x(), s.mean.y(), s.conic(0), s.conic(1), s.conic(2), s.opacity, s.x0, s.x1, s.y0, s.y1, id});
  }
  TileGrid& g = p.grid;
  g.tile = settings.tile_size;
  g.tiles_x = (camera.width + g.tile - 1) / g.tile;
  g.tiles_y = (camera.height + g.tile - 1) / g.tile;
  g.lists.resize(static_cast<std::size_t>(g.tiles_x) * static_cast<std::size_t>(g.tiles_y));
  for (std::uint32_t rank = 0; rank < p.raster.size(); ++rank) {
    const RasterSplat& s = p.raster[rank];
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    for (int ty = s.y0 / g.tile; ty <= s.y1 / g.tile; ++ty)
      for (int tx = s.x0 / g.tile; tx <= s.x1 / g.tile; ++tx)
        g.lists[static_cast<std::size_t>(ty) * static_cast<std::size_t>(g.tiles_x) + static_cast<std::size_t>(tx)].push_back(rank);
  }
  return p;
}

struct Contribution {
  std::uint32_t splat;  // index into the projection
  std::uint32_t slot;   // position in the tile list
  double alpha;         // clamped per-splat alpha at this pixel
  double kernel;        // exp(-power)
  double transmittance;  // before this splat
  bool clamped;
};

// Front-to-back compositing of one pixel. Calls visit(contribution) for every
// splat that contributes; returns the final transmittance.
// `row` holds the tile-list slots whose footprint spans pixel row y.
template <typename Visit>
double composite(const std::vector<RasterSplat>& raster, const std::vector<std::uint32_t>& list,
                 const std::vector<std::uint32_t>& row, int x, int y, const RenderSettings& settings, Visit&& visit) {
  const double px = x + 0.5;
  const double py = y + 0.5;
  double t = 1.0;
  for (const std::uint32_t k : row) {
    const RasterSplat& s = raster[list[k]];
    if (x < s.x0 || x > s.x1) continue;
    const double dx = px - s.mx;
    const double dy = py - s.my;
    const double power = 0.5 * (s.conic_xx * dx * dx + s.conic_yy * dy * dy) + s.conic_xy * dx * dy;
    const double kernel = std::exp(-power);
    const double raw = s.opacity * kernel;
    const bool clamped = raw >= settings.max_alpha;
    const double alpha = clamped ? settings.max_alpha : raw;
    visit(Contribution{s.id, k, alpha, kernel, t, clamped});
    t *= 1.0 - alpha;
    if (t < settings.min_transmittance) break;
  }
  return t;
}

void row_slots(const std::vector<RasterSplat>& raster, const std::vector<std::uint32_t>& list, int y,
               std::vector<std::uint32_t>& out) {
  out.clear();
  for (std::uint32_t k = 0; k < list.size(); ++k) {
    const RasterSplat& s = raster[list[k]];
    if (y >= s.y0 && y <= s.y1) out.push_back(k);
  }
}

template <typename TileFn>
void for_each_tile(const TileGrid& g, TileFn&& fn) {
  parallel_for(g.lists.size(), [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % static_cast<std::size_t>(g.tiles_x));
    const int ty = static_cast<int>(tile / static_cast<std::size_t>(g.tiles_x));
    fn(tile, tx * g.tile, ty * g.tile);
  });
}

// Perspective Jacobian at a camera-space point, with the lateral ratios
// clamped to the guard band. clamped_x/y report which ratios hit a limit.
struct ProjectionJacobian {
  Eigen::Matrix<double, 2, 3> j;
  double u = 0.0, v = 0.0;  // clamped x/z, y/z
  bool clamped_x = false, clamped_y = false;
};

ProjectionJacobian projection_jacobian(const Camera& camera, const Vector3& pc, double guard) {
  const Intrinsics& k = camera.intrinsics;
  const double gx = guard * camera.width, gy = guard * camera.height;
  const double ux = pc.x() / pc.z(), vy = pc.y() / pc.z();
  ProjectionJacobian out;
  out.u = std::clamp(ux, (-k.cx - gx) / k.fx, (camera.width - k.cx + gx) / k.fx);
  out.v = std::clamp(vy, (-k.cy - gy) / k.fy, (camera.height - k.cy + gy) / k.fy);
  out.clamped_x = out.u != ux;
  out.clamped_y = out.v != vy;
  const double iz = 1.0 / pc.z();
  out.j << k.fx * iz, 0.0, -k.fx * out.u * iz,
           0.0, k.fy * iz, -k.fy * out.v * iz;
  return out;
}

}  // namespace

Projection project(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings) {
  camera.validate();
  require(scene.positions.cols() == static_cast<Eigen::Index>(scene.size()) && scene.covariances.size() == scene.size() &&
              scene.opacities.size() == static_cast<Eigen::Index>(scene.size()) &&
              scene.colors.cols() == static_cast<Eigen::Index>(scene.size()),
          ErrorCode::InvalidInput, "scene attribute arrays differ in length");
  Projection out;
  out.splats.reserve(scene.size());
  const Intrinsics& k = camera.intrinsics;
  const Matrix3& w = camera.rotation;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Vector3 pc = camera.to_camera(scene.positions.col(col));
    if (!(pc.z() > camera.near_plane)) {
      ++out.culled;
      continue;
    }
    const Eigen::Matrix<double, 2, 3> jw = projection_jacobian(camera, pc, settings.jacobian_guard_band).j * w;
    Matrix2 cov = jw * scene.covariances[i] * jw.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov.diagonal().array() += settings.covariance_dilation;
    const double det = cov.determinant();
    if (!(det > 0.0) || !std::isfinite(det) || !(cov(0, 0) > 0.0)) {
      ++out.skipped;
      continue;
    }
    Splat2D s;
    s.index = static_cast<std::uint32_t>(i);
    s.camera_point = pc;
    s.mean = k.project(pc);
    s.cov = cov;
    s.conic = Vector3(cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det);
    s.depth = pc.z();
    s.color = scene.colors.col(col);
    s.opacity = scene.opacities(col);
    const double rx = settings.truncation_sigma * std::sqrt(cov(0, 0));
    const double ry = settings.truncation_sigma * std::sqrt(cov(1, 1));
    // Pixel x is covered when |x + 0.5 - mean| <= r.
    const double fx0 = std::ceil(s.mean.x() - rx - 0.5), fx1 = std::floor(s.mean.x() + rx - 0.5);
    const double fy0 = std::ceil(s.mean.y() - ry - 0.5), fy1 = std::floor(s.mean.y() + ry - 0.5);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > camera.width - 1 || fy0 > camera.height - 1 || !std::isfinite(fx0 + fx1 + fy0 + fy1)) {
      s.x0 = 0, s.x1 = -1, s.y0 = 0, s.y1 = -1;
    } else {
      s.x0 = static_cast<int>(std::max(fx0, 0.0));
      s.x1 = static_cast<int>(std::min(fx1, camera.width - 1.0));
      s.y0 = static_cast<int>(std::max(fy0, 0.0));
      s.y1 = static_cast<int>(std::min(fy1, camera.height - 1.0));
    }
    out.splats.push_back(s);
  }
  return out;
}

Image render(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings, RenderStats* stats) {
  const Prepared p = prepare(scene, camera, settings);
  Image img(camera.width, camera.height);
  img.alpha.setZero(static_cast<Eigen::Index>(img.pixel_count()));
  const auto& splats = p.projection.splats;
  std::vector<double> tile_max(p.grid.lists.size(), 0.0);
  for_each_tile(p.grid, [&](std::size_t tile, int x0, int y0) {
    const auto& list = p.grid.lists[tile];
    std::vector<std::uint32_t> row;
    for (int y = y0; y < std::min(y0 + p.grid.tile, camera.height); ++y) {
      row_slots(p.raster, list, y, row);
      for (int x = x0; x < std::min(x0 + p.grid.tile, camera.width); ++x) {
        Vector3 c = Vector3::Zero();
        double weight_sum = 0.0;
        const double t = composite(p.raster, list, row, x, y, settings, [&](const Contribution& k) {
          const double w = k.alpha * k.transmittance;
          c += w * splats[k.splat].color;
          weight_sum += w;
        });
        if (settings.check_transmittance)
          require(weight_sum <= 1.0 + 1e-12, ErrorCode::NumericalFailure, "compositing weights exceed 1");
        tile_max[tile] = std::max(tile_max[tile], weight_sum);
        img.pixel(x, y) = c + t * settings.background;
        img.alpha(img.index(x, y)) = 1.0 - t;
      }
    }
  });
  if (stats) {
    stats->culled = p.projection.culled;
    stats->skipped = p.projection.skipped;
    stats->tile_entries = 0;
    for (const auto& l : p.grid.lists) stats->tile_entries += l.size();
    stats->max_weight_sum = tile_max.empty() ? 0.0 : *std::max_element(tile_max.begin(), tile_max.end());
  }
  return img;
}

Image render_back_to_front(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings) {
  const Prepared p = prepare(scene, camera, settings);
  const auto& splats = p.projection.splats;
  Image img(camera.width, camera.height, settings.background);
  img.alpha.setZero(static_cast<Eigen::Index>(img.pixel_count()));
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      Vector3 c = settings.background;
      double a = 0.0;
      for (auto it = p.order.rbegin(); it != p.order.rend(); ++it) {
        const Splat2D& s = splats[*it];
        if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
        const double dx = x + 0.5 - s.mean.x();
        const double dy = y + 0.5 - s.mean.y();
        const double power = 0.5 * (s.conic(0) * dx * dx + s.conic(2) * dy * dy) + s.conic(1) * dx * dy;
        const double alpha = std::min(settings.max_alpha, s.opacity * std::exp(-power));
        c = alpha * s.color + (1.0 - alpha) * c;
        a = alpha + (1.0 - alpha) * a;
      }
      img.pixel(x, y) = c;
      img.alpha(img.index(x, y)) = a;
    }
  }
  return img;
}

GradientBuffers render_backward(const RenderableScene& scene, const Camera& camera, const Image& d_image,
                                const RenderSettings& settings, bool geometry) {
  require(d_image.width == camera.width && d_image.height == camera.height &&
              d_image.rgb.cols() == static_cast<Eigen::Index>(d_image.pixel_count()),
          ErrorCode::InvalidInput, "image gradient does not match the camera resolution");
  const Prepared p = prepare(scene, camera, settings);
  const auto& splats = p.projection.splats;
  const std::size_t ns = splats.size();

  // Per splat: d color (3), d opacity (1), d mean (2), d conic (3).
  using Accum = Eigen::Matrix<double, 9, 1>;
  std::vector<std::vector<Accum>> tile_acc(p.grid.lists.size());
  for_each_tile(p.grid, [&](std::size_t tile, int x0, int y0) {
    const auto& list = p.grid.lists[tile];
    auto& acc = tile_acc[tile];
    acc.assign(list.size(), Accum::Zero());
    std::vector<Contribution> contribs;
    std::vector<std::uint32_t> row;
    for (int y = y0; y < std::min(y0 + p.grid.tile, camera.height); ++y) {
      row_slots(p.raster, list, y, row);
      for (int x = x0; x < std::min(x0 + p.grid.tile, camera.width); ++x) {
        const Vector3 dc = d_image.pixel(x, y);
        if (dc.isZero(0.0)) continue;
        contribs.clear();
        const double t_final =
            composite(p.raster, list, row, x, y, settings, [&](const Contribution& k) { contribs.push_back(k); });
        Vector3 behind = t_final * settings.background;
        for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
          const Splat2D& s = splats[it->splat];
          Accum& a = acc[it->slot];
          const double w = it->alpha * it->transmittance;
          a.segment<3>(0) += w * dc;
          const double d_alpha = dc.dot(it->transmittance * s.color - behind / (1.0 - it->alpha));
          behind += w * s.color;
          if (it->clamped) continue;
          a(3) += d_alpha * it->kernel;
          if (!geometry) continue;
          const double d_power = -d_alpha * s.opacity * it->kernel;
          const double dx = x + 0.5 - s.mean.x();
          const double dy = y + 0.5 - s.mean.y();
          a(4) += -d_power * (s.conic(0) * dx + s.conic(1) * dy);
          a(5) += -d_power * (s.conic(1) * dx + s.conic(2) * dy);
          a(6) += d_power * 0.5 * dx * dx;
          a(7) += d_power * dx * dy;
          a(8) += d_power * 0.5 * dy * dy;
        }
      }
    }
  });

  // Deterministic reduction in tile order.
  std::vector<Accum> per_splat(ns, Accum::Zero());
  for (std::size_t tile = 0; tile < p.grid.lists.size(); ++tile)
    for (std::size_t k = 0; k < p.grid.lists[tile].size(); ++k) per_splat[p.raster[p.grid.lists[tile][k]].id] += tile_acc[tile][k];

  GradientBuffers out;
  const auto n = static_cast<Eigen::Index>(scene.size());
  out.d_color.setZero(3, n);
  out.d_opacity_logit.setZero(n);
  if (geometry) {
    out.d_position.setZero(3, n);
    out.d_covariance.assign(scene.size(), Matrix3::Zero());
  }
  const Intrinsics& k = camera.intrinsics;
  const Matrix3& w = camera.rotation;
  for (std::size_t sid = 0; sid < ns; ++sid) {
    const Splat2D& s = splats[sid];
    const Accum& a = per_splat[sid];
    const auto gi = static_cast<Eigen::Index>(s.index);
    out.d_color.col(gi) = a.segment<3>(0);
    out.d_opacity_logit(gi) = a(3) * s.opacity * (1.0 - s.opacity);
    if (!geometry) continue;
    // Conic gradient to 2D covariance: dL/dSigma = -K G K with G symmetric.
    Matrix2 conic;
    conic << s.conic(0), s.conic(1), s.conic(1), s.conic(2);
    Matrix2 g_conic;
    g_conic << a(6), 0.5 * a(7), 0.5 * a(7), a(8);
    const Matrix2 g_cov2 = -conic * g_conic * conic;
    const Vector3& pc = s.camera_point;
    const double iz = 1.0 / pc.z();
    const ProjectionJacobian pj = projection_jacobian(camera, pc, settings.jacobian_guard_band);
    const Eigen::Matrix<double, 2, 3>& jac = pj.j;
    const Matrix3 cam_cov = w * scene.covariances[s.index] * w.transpose();
    out.d_covariance[s.index] = w.transpose() * (jac.transpose() * g_cov2 * jac) * w;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2 * jac * cam_cov;
    // J02 = -fx u / z with u = x / z unless clamped (then constant).
    Vector3 g_pc = Vector3::Zero();
    g_pc.z() += g_jac(0, 0) * (-k.fx * iz * iz) + g_jac(1, 1) * (-k.fy * iz * iz);
    if (pj.clamped_x) {
      g_pc.z() += g_jac(0, 2) * (k.fx * pj.u * iz * iz);
    } else {
      g_pc.x() += g_jac(0, 2) * (-k.fx * iz * iz);
      g_pc.z() += g_jac(0, 2) * (2.0 * k.fx * pc.x() * iz * iz * iz);
    }
    if (pj.clamped_y) {
      g_pc.z() += g_jac(1, 2) * (k.fy * pj.v * iz * iz);
    } else {
      g_pc.y() += g_jac(1, 2) * (-k.fy * iz * iz);
      g_pc.z() += g_jac(1, 2) * (2.0 * k.fy * pc.y() * iz * iz * iz);
    }
    g_pc.x() += a(4) * k.fx * iz;
    g_pc.y() += a(5) * k.fy * iz;
    g_pc.z() += -a(4) * k.fx * pc.x() * iz * iz - a(5) * k.fy * pc.y() * iz * iz;
    out.d_position.col(gi) = w.transpose() * g_pc;
  }
  return out;
}

SceneSubset select_origin(const RenderableScene& scene, Origin origin) {
  SceneSubset out;
  for (std::size_t i = 0; i < scene.size(); ++i)
    if (scene.origins[i] == origin) out.indices.push_back(static_cast<std::uint32_t>(i));
  const auto n = static_cast<Eigen::Index>(out.indices.size());
  RenderableScene& s = out.scene;
  s.positions.resize(3, n);
  s.colors.resize(3, n);
  s.opacities.resize(n);
  s.covariances.reserve(out.indices.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = static_cast<Eigen::Index>(out.indices[static_cast<std::size_t>(k)]);
    s.positions.col(k) = scene.positions.col(src);
    s.colors.col(k) = scene.colors.col(src);
    s.opacities(k) = scene.opacities(src);
    s.covariances.push_back(scene.covariances[static_cast<std::size_t>(src)]);
  }
  s.origins.assign(out.indices.size(), origin);
  return out;
}

HumanOnlyRender render_human_only(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings,
                                  double mask_threshold) {
  HumanOnlyRender out;
  out.subset = select_origin(scene, Origin::Human);
  RenderSettings black = settings;
  black.background = Vector3::Zero();
  out.image = render(out.subset.scene, camera, black);
  out.mask = Mask(camera.width, camera.height);
  for (std::size_t i = 0; i < out.image.pixel_count(); ++i)
    out.mask.values[i] = out.image.alpha(static_cast<Eigen::Index>(i)) > mask_threshold ? 1 : 0;
  return out;
}

Mask human_coverage(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings, double epsilon) {
  return render_human_only(scene, camera, settings, epsilon).mask;
}

}  // namespace skinsplat
