#pragma once

#include "skinsplat/body_model.hpp"

namespace skinsplat {

struct ToyBodyOptions {
  int sectors = 16;  // around each limb tube
  int rings = 8;     // along each limb tube
};

/// Procedural humanoid with a 24-joint SMPL-style skeleton (y up, +z
/// forward, left side at +x). Every body part is an open tube with its own UV
/// chart in a 4x4 atlas. Used as the bundled test body and by the synthetic
/// fixtures.
SkinnedMesh make_toy_body(const ToyBodyOptions& options = {});

}  // namespace skinsplat
