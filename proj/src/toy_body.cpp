#include "skinsplat/toy_body.hpp"

#include <cmath>
#include <functional>

namespace skinsplat {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct JointSpec {
  const char* name;
  int parent;
  double x, y, z;
};

// clang-format off
constexpr JointSpec kSkeleton[] = {
    {"pelvis", -1, 0.0, 0.95, 0.0},
    {"left_hip", 0, 0.09, 0.88, 0.0},
    {"right_hip", 0, -0.09, 0.88, 0.0},
    {"spine1", 0, 0.0, 1.05, 0.0},
    {"left_knee", 1, 0.10, 0.50, 0.0},
    {"right_knee", 2, -0.10, 0.50, 0.0},
    {"spine2", 3, 0.0, 1.18, 0.0},
    {"left_ankle", 4, 0.10, 0.10, 0.0},
    {"right_ankle", 5, -0.10, 0.10, 0.0},
    {"spine3", 6, 0.0, 1.30, 0.0},
    {"left_foot", 7, 0.10, 0.03, 0.12},
    {"right_foot", 8, -0.10, 0.03, 0.12},
    {"neck", 9, 0.0, 1.50, 0.0},
    {"left_collar", 9, 0.07, 1.42, 0.0},
    {"right_collar", 9, -0.07, 1.42, 0.0},
    {"head", 12, 0.0, 1.62, 0.0},
    {"left_shoulder", 13, 0.18, 1.44, 0.0},
    {"right_shoulder", 14, -0.18, 1.44, 0.0},
    {"left_elbow", 16, 0.45, 1.44, 0.0},
    {"right_elbow", 17, -0.45, 1.44, 0.0},
    {"left_wrist", 18, 0.70, 1.44, 0.0},
    {"right_wrist", 19, -0.70, 1.44, 0.0},
    {"left_hand", 20, 0.78, 1.44, 0.0},
    {"right_hand", 21, -0.78, 1.44, 0.0},
};
// clang-format on

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

struct Tube {
  Vector3 start, end;
  double radius_start, radius_end;
  // Profile multiplier along the tube (1 for plain cones).
  std::function<double(double)> profile;
  // Skinning weights as a function of the axial parameter t in [0,1].
  std::function<SkinWeights(double)> weights;
};

SkinWeights blend(std::initializer_list<std::pair<int, double>> entries) {
  SkinWeights w;
  for (const auto& [j, v] : entries)
    if (v > 0.0) w.push_back({static_cast<std::uint16_t>(j), v});
  return w;
}

// Limb segment driven by `joint`, blending into its parent near the start and
// into `child` (if any) near the end.
std::function<SkinWeights(double)> limb_weights(int parent, int joint, int child) {
  return [=](double t) {
    const double w_parent = 0.5 * (1.0 - smoothstep(t / 0.2));
    const double w_child = child >= 0 ? 0.5 * smoothstep((t - 0.8) / 0.2) : 0.0;
    return blend({{parent, w_parent}, {joint, 1.0 - w_parent - w_child}, {child, w_child}});
  };
}

Vector3 joint_pos(int j) { return {kSkeleton[j].x, kSkeleton[j].y, kSkeleton[j].z}; }

}  // namespace

SkinnedMesh make_toy_body(const ToyBodyOptions& options) {
  SkinnedMesh mesh;
  for (const auto& js : kSkeleton) mesh.joints.push_back({js.name, js.parent, Vector3(js.x, js.y, js.z)});

  const auto plain = [](double) { return 1.0; };
  std::vector<Tube> tubes;
  // Torso weights interpolate between consecutive spine joints by height.
  const int spine[] = {0, 3, 6, 9, 12};
  tubes.push_back({Vector3(0, 0.82, 0), Vector3(0, 1.50, 0), 0.15, 0.12, plain, [&](double t) {
                     const double y = 0.82 + t * (1.50 - 0.82);
                     for (int k = 0; k + 1 < 5; ++k) {
                       const double y0 = kSkeleton[spine[k]].y, y1 = kSkeleton[spine[k + 1]].y;
                       if (y <= y1 || k == 3) {
                         const double a = std::clamp((y - y0) / (y1 - y0), 0.0, 1.0);
                         return blend({{spine[k], 1.0 - a}, {spine[k + 1], a}});
                       }
                     }
                     return blend({{0, 1.0}});
                   }});
  tubes.push_back({Vector3(0, 1.50, 0), Vector3(0, 1.82, 0), 0.05, 0.05,
                   [](double t) { return 1.0 + 1.2 * std::sin(kPi * t); },
                   [](double t) {
                     const double a = smoothstep(t / 0.3);
                     return blend({{12, 1.0 - a}, {15, a}});
                   }});
  for (int side = 0; side < 2; ++side) {
    const int hip = 1 + side, knee = 4 + side, ankle = 7 + side, foot = 10 + side;
    const int collar = 13 + side, shoulder = 16 + side, elbow = 18 + side, wrist = 20 + side, hand = 22 + side;
    const double sx = side == 0 ? 1.0 : -1.0;
    tubes.push_back({joint_pos(hip), joint_pos(knee), 0.075, 0.055, plain, limb_weights(0, hip, knee)});
    tubes.push_back({joint_pos(knee), joint_pos(ankle), 0.05, 0.04, plain, limb_weights(hip, knee, ankle)});
    tubes.push_back({joint_pos(ankle), Vector3(sx * 0.10, 0.04, 0.22), 0.04, 0.03, plain,
                     limb_weights(knee, ankle, foot)});
    tubes.push_back({joint_pos(shoulder) - Vector3(sx * 0.03, 0, 0), joint_pos(elbow), 0.05, 0.04, plain,
                     limb_weights(collar, shoulder, elbow)});
    tubes.push_back({joint_pos(elbow), joint_pos(wrist), 0.04, 0.03, plain, limb_weights(shoulder, elbow, wrist)});
    tubes.push_back({joint_pos(wrist), Vector3(sx * 0.86, 1.44, 0), 0.03, 0.02, plain, limb_weights(elbow, wrist, hand)});
  }

  const int sectors = options.sectors;
  const int rings = options.rings;
  constexpr int kAtlasCells = 4;
  constexpr double kCell = 1.0 / kAtlasCells;
  constexpr double kMargin = 0.01;
  std::vector<Vector3> positions;
  for (std::size_t ti = 0; ti < tubes.size(); ++ti) {
    const Tube& tube = tubes[ti];
    const Vector3 axis = tube.end - tube.start;
    const Vector3 dir = axis.normalized();
    const Vector3 helper = std::abs(dir.y()) < 0.9 ? Vector3::UnitY() : Vector3::UnitZ();
    const Vector3 e1 = dir.cross(helper).normalized();
    const Vector3 e2 = dir.cross(e1);
    const double u0 = static_cast<double>(ti % kAtlasCells) * kCell + kMargin;
    const double v0 = static_cast<double>(ti / kAtlasCells) * kCell + kMargin;
    const double extent = kCell - 2.0 * kMargin;
    const auto base = static_cast<std::uint32_t>(positions.size());
    for (int r = 0; r <= rings; ++r) {
      const double t = static_cast<double>(r) / rings;
      const double radius = (tube.radius_start + t * (tube.radius_end - tube.radius_start)) * tube.profile(t);
      const SkinWeights w = tube.weights(t);
      for (int s = 0; s <= sectors; ++s) {
        const double phi = 2.0 * kPi * static_cast<double>(s) / sectors;
        positions.push_back(tube.start + t * axis + radius * (std::cos(phi) * e1 + std::sin(phi) * e2));
        mesh.weights.push_back(w);
      }
    }
    const auto idx = [&](int r, int s) { return base + static_cast<std::uint32_t>(r * (sectors + 1) + s); };
    const auto uv = [&](int r, int s) {
      return Vector2(u0 + extent * static_cast<double>(s) / sectors, v0 + extent * static_cast<double>(r) / rings);
    };
    for (int r = 0; r < rings; ++r) {
      for (int s = 0; s < sectors; ++s) {
        mesh.triangles.push_back({{idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)}, {uv(r, s), uv(r, s + 1), uv(r + 1, s + 1)}});
        mesh.triangles.push_back({{idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)}, {uv(r, s), uv(r + 1, s + 1), uv(r + 1, s)}});
      }
    }
  }
  mesh.vertices.resize(3, static_cast<Eigen::Index>(positions.size()));
  for (std::size_t i = 0; i < positions.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = positions[i];
  return make_skinned_mesh(std::move(mesh));
}

}  // namespace skinsplat
