#pragma once

#include "skinsplat/fit.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace skinsplat {

// Pose documents: {"version": 1, "joints": {name: [x, y, z]}, "root_translation": [x, y, z], "shape": [...]}.
nlohmann::json pose_to_json(const SkinnedMesh& mesh, const Pose& pose);
/// Full pose; joints absent from the document stay at zero rotation.
Pose pose_from_json(const SkinnedMesh& mesh, const nlohmann::json& doc);

/// Partial edit of a pose. Only the listed joints (and the root translation,
/// when present) change.
struct PoseUpdate {
  std::map<std::string, Vector3> joints;
  std::optional<Vector3> root_translation;
};
PoseUpdate pose_update_from_json(const nlohmann::json& doc);

/// Everything needed to render a fitted avatar in its scene.
struct SceneBundle {
  FitProblem problem;
  PositionTexture texture;
  Camera camera;
  Pose pose;
  RenderSettings render;
};
/// Reads a bundle manifest (see docs/formats.md); relative paths resolve
/// against the manifest's directory.
SceneBundle load_bundle(const std::filesystem::path& manifest);
/// Writes every component plus bundle.json into `directory`.
void save_bundle(const SceneBundle& bundle, const std::filesystem::path& directory);

// Frame sets: {"version": 1, "frames": [{"image": "...", "mask": "...", "camera": "...", "pose": "..."}]}
// with paths relative to the manifest.
std::vector<Frame> load_frames(const std::filesystem::path& manifest, const SkinnedMesh& mesh);
void save_frames(const std::vector<Frame>& frames, const SkinnedMesh& mesh, const std::filesystem::path& directory);

/// Immutable view of a session at one generation.
struct SessionState {
  std::shared_ptr<const SceneBundle> scene;  // shared between snapshots
  Pose pose;
  Camera camera;
  std::uint64_t generation = 0;
};

/// One avatar in one scene with an editable pose and camera. Mutations are
/// serialized; readers render from snapshots without holding the lock.
class Session {
 public:
  explicit Session(SceneBundle bundle);

  std::shared_ptr<const SessionState> snapshot() const;
  const SceneBundle& scene() const { return *scene_; }

  /// Applies all joint updates or none; unknown joint names throw.
  std::shared_ptr<const SessionState> set_pose(const PoseUpdate& update);
  std::shared_ptr<const SessionState> set_camera(const Camera& camera);

 private:
  std::shared_ptr<const SceneBundle> scene_;
  mutable std::mutex mutex_;
  std::shared_ptr<const SessionState> state_;
};

Image render_state(const SessionState& state);
/// Pixels the posed human can touch in this state.
Mask human_coverage(const SessionState& state);

/// Timed pose keys; a key may also move the camera.
struct MotionKey {
  double time = 0.0;  // seconds
  Pose pose;
  std::optional<Camera> camera;
};
struct MotionClip {
  std::vector<MotionKey> keys;
  void validate() const;  // non-empty, strictly increasing times
};
// Clip documents: {"version": 1, "keys": [{"time": t, "pose": <pose document>, "camera": <camera document>?}]}.
nlohmann::json clip_to_json(const SkinnedMesh& mesh, const MotionClip& clip);
MotionClip clip_from_json(const SkinnedMesh& mesh, const nlohmann::json& doc);

/// Pose and camera at time t: axis-angle and translations interpolate
/// linearly between the surrounding keys, camera rotations by slerp, and
/// times outside the clip clamp to its ends. Keys without a camera use
/// `fallback`.
MotionKey sample_clip(const MotionClip& clip, double t, const Camera& fallback);

/// Renders the clip into `directory` as frame_00000.png, ... Without a frame
/// rate there is one frame per key; with one, frames are sampled at
/// t0 + k / fps up to the last key. The session state is not modified.
std::vector<std::filesystem::path> play_clip(const Session& session, const MotionClip& clip,
                                             const std::filesystem::path& directory,
                                             std::optional<double> fps = std::nullopt);

}  // namespace skinsplat
