#include "skinsplat/session.hpp"

#include "skinsplat/error.hpp"
#include "skinsplat/mesh_io.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>

namespace skinsplat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Vector3 vec3(const json& v, const char* what) {
  require(v.is_array() && v.size() == 3, ErrorCode::InvalidInput, fmt::format("{} needs 3 numbers", what));
  Vector3 out(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  require(out.allFinite(), ErrorCode::InvalidInput, fmt::format("{} must be finite", what));
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::size_t joint_index(const SkinnedMesh& mesh, const std::string& name) {
  const int j = mesh.find_joint(name);
  require(j >= 0, ErrorCode::InvalidInput, "unknown joint '" + name + "'");
  return static_cast<std::size_t>(j);
}

}  // namespace

json pose_to_json(const SkinnedMesh& mesh, const Pose& pose) {
  require(pose.joint_rotations.size() == mesh.joint_count(), ErrorCode::InvalidInput,
          "pose joint count does not match the mesh");
  json joints = json::object();
  for (std::size_t j = 0; j < mesh.joint_count(); ++j) {
    const Vector3& r = pose.joint_rotations[j];
    joints[mesh.joints[j].name] = {r.x(), r.y(), r.z()};
  }
  json doc = {{"version", 1},
              {"joints", joints},
              {"root_translation", {pose.root_translation.x(), pose.root_translation.y(), pose.root_translation.z()}}};
  if (pose.shape_coeffs.size() > 0)
    doc["shape"] = std::vector<double>(pose.shape_coeffs.data(), pose.shape_coeffs.data() + pose.shape_coeffs.size());
  return doc;
}

PoseUpdate pose_update_from_json(const json& doc) {
  try {
    require(doc.is_object(), ErrorCode::InvalidInput, "pose document must be an object");
    require(doc.value("version", 1) == 1, ErrorCode::InvalidInput, "unsupported pose version");
    PoseUpdate u;
    if (doc.contains("joints")) {
      require(doc["joints"].is_object(), ErrorCode::InvalidInput, "\"joints\" must map joint names to axis-angle");
      for (const auto& [name, value] : doc["joints"].items()) u.joints[name] = vec3(value, name.c_str());
    }
    if (doc.contains("root_translation")) u.root_translation = vec3(doc["root_translation"], "root_translation");
    return u;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed pose document: ") + e.what());
  }
}

Pose pose_from_json(const SkinnedMesh& mesh, const json& doc) {
  const PoseUpdate u = pose_update_from_json(doc);
  Pose p = Pose::zero(mesh.joint_count());
  for (const auto& [name, r] : u.joints) p.joint_rotations[joint_index(mesh, name)] = r;
  if (u.root_translation) p.root_translation = *u.root_translation;
  if (doc.contains("shape")) {
    const auto shape = doc["shape"].get<std::vector<double>>();
    p.shape_coeffs = Eigen::Map<const Eigen::VectorXd>(shape.data(), static_cast<Eigen::Index>(shape.size()));
  }
  return p;
}

SceneBundle load_bundle(const fs::path& manifest) {
  const json doc = read_json(manifest);
  const fs::path dir = manifest.parent_path();
  const auto path_of = [&](const char* key) {
    require(doc.contains(key) && doc[key].is_string(), ErrorCode::InvalidInput,
            fmt::format("bundle manifest {} lacks \"{}\"", manifest.string(), key));
    return dir / doc[key].get<std::string>();
  };
  require(doc.value("version", 0) == 1, ErrorCode::InvalidInput, "unsupported bundle version");
  SceneBundle b;
  const fs::path mesh = path_of("mesh");
  b.problem.mesh = mesh.extension() == ".obj" ? load_obj_with_weights(mesh, path_of("weights")) : load_mesh_json(mesh);
  b.texture = load_texture(path_of("texture"));
  b.problem.human = load_human(path_of("human"), b.texture);
  b.problem.background = load_background_ply(path_of("background"));
  b.problem.alignment = alignment_from_json(read_json(path_of("alignment")));
  b.camera = camera_from_json(read_json(path_of("camera")));
  b.pose = doc.contains("pose") ? pose_from_json(b.problem.mesh, read_json(path_of("pose")))
                                : Pose::zero(b.problem.mesh.joint_count());
  if (doc.contains("background_color")) b.render.background = vec3(doc["background_color"], "background_color");
  b.camera.validate();
  return b;
}

void save_bundle(const SceneBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  save_mesh_json(b.problem.mesh, dir / "mesh.json");
  save_texture(b.texture, dir / "texture.bin");
  save_human(b.problem.human, dir / "human.bin");
  save_background_ply(b.problem.background, dir / "background.ply");
  write_json(alignment_to_json(b.problem.alignment), dir / "alignment.json");
  write_json(camera_to_json(b.camera), dir / "camera.json");
  write_json(pose_to_json(b.problem.mesh, b.pose), dir / "pose.json");
  const Vector3& bg = b.render.background;
  write_json({{"version", 1},
              {"mesh", "mesh.json"},
              {"texture", "texture.bin"},
              {"human", "human.bin"},
              {"background", "background.ply"},
              {"alignment", "alignment.json"},
              {"camera", "camera.json"},
              {"pose", "pose.json"},
              {"background_color", {bg.x(), bg.y(), bg.z()}}},
             dir / "bundle.json");
}

std::vector<Frame> load_frames(const fs::path& manifest, const SkinnedMesh& mesh) {
  const json doc = read_json(manifest);
  const fs::path dir = manifest.parent_path();
  require(doc.value("version", 0) == 1, ErrorCode::InvalidInput, "unsupported frame set version");
  std::vector<Frame> frames;
  try {
    for (const json& f : doc.at("frames")) {
      Frame frame;
      frame.image = read_image(dir / f.at("image").get<std::string>());
      frame.mask = read_mask_png(dir / f.at("mask").get<std::string>());
      frame.camera = camera_from_json(read_json(dir / f.at("camera").get<std::string>()));
      frame.pose = pose_from_json(mesh, read_json(dir / f.at("pose").get<std::string>()));
      frame.validate();
      frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, fmt::format("{}: {}", manifest.string(), e.what()));
  }
  require(!frames.empty(), ErrorCode::InvalidInput, "frame set is empty");
  return frames;
}

void save_frames(const std::vector<Frame>& frames, const SkinnedMesh& mesh, const fs::path& dir) {
  fs::create_directories(dir);
  json list = json::array();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::string stem = fmt::format("frame_{:03d}", k);
    write_pfm(frames[k].image, dir / (stem + ".pfm"));
    write_mask_png(frames[k].mask, dir / (stem + "_mask.png"));
    write_json(camera_to_json(frames[k].camera), dir / (stem + "_camera.json"));
    write_json(pose_to_json(mesh, frames[k].pose), dir / (stem + "_pose.json"));
    list.push_back({{"image", stem + ".pfm"},
                    {"mask", stem + "_mask.png"},
                    {"camera", stem + "_camera.json"},
                    {"pose", stem + "_pose.json"}});
  }
  write_json({{"version", 1}, {"frames", list}}, dir / "frames.json");
}

Session::Session(SceneBundle bundle) {
  require(bundle.pose.joint_rotations.size() == bundle.problem.mesh.joint_count(), ErrorCode::InvalidInput,
          "bundle pose joint count does not match the mesh");
  bundle.problem.human.validate();
  bundle.problem.background.validate();
  bundle.camera.validate();
  auto state = std::make_shared<SessionState>();
  state->pose = bundle.pose;
  state->camera = bundle.camera;
  scene_ = std::make_shared<const SceneBundle>(std::move(bundle));
  state->scene = scene_;
  state_ = std::move(state);
}

std::shared_ptr<const SessionState> Session::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::shared_ptr<const SessionState> Session::set_pose(const PoseUpdate& update) {
  std::vector<std::pair<std::size_t, Vector3>> resolved;
  for (const auto& [name, r] : update.joints) resolved.emplace_back(joint_index(scene_->problem.mesh, name), r);
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<SessionState>(*state_);
  for (const auto& [j, r] : resolved) next->pose.joint_rotations[j] = r;
  if (update.root_translation) next->pose.root_translation = *update.root_translation;
  ++next->generation;
  state_ = std::move(next);
  return state_;
}

std::shared_ptr<const SessionState> Session::set_camera(const Camera& camera) {
  camera.validate();
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<SessionState>(*state_);
  next->camera = camera;
  ++next->generation;
  state_ = std::move(next);
  return state_;
}

Image render_state(const SessionState& state) {
  return render(compose_scene(state.scene->problem, state.pose), state.camera, state.scene->render);
}

Mask human_coverage(const SessionState& state) {
  return human_coverage(compose_scene(state.scene->problem, state.pose), state.camera, state.scene->render);
}

void MotionClip::validate() const {
  require(!keys.empty(), ErrorCode::InvalidInput, "motion clip has no keys");
  for (std::size_t k = 0; k < keys.size(); ++k) {
    require(std::isfinite(keys[k].time), ErrorCode::InvalidInput, "motion key time must be finite");
    require(k == 0 || keys[k].time > keys[k - 1].time, ErrorCode::InvalidInput,
            fmt::format("motion key times must increase strictly (key {})", k));
  }
}

json clip_to_json(const SkinnedMesh& mesh, const MotionClip& clip) {
  json keys = json::array();
  for (const MotionKey& k : clip.keys) {
    json entry = {{"time", k.time}, {"pose", pose_to_json(mesh, k.pose)}};
    if (k.camera) entry["camera"] = camera_to_json(*k.camera);
    keys.push_back(std::move(entry));
  }
  return {{"version", 1}, {"keys", keys}};
}

MotionClip clip_from_json(const SkinnedMesh& mesh, const json& doc) {
  try {
    require(doc.value("version", 1) == 1, ErrorCode::InvalidInput, "unsupported clip version");
    MotionClip clip;
    for (const json& k : doc.at("keys")) {
      MotionKey key;
      key.time = k.at("time").get<double>();
      key.pose = pose_from_json(mesh, k.at("pose"));
      if (k.contains("camera")) key.camera = camera_from_json(k["camera"]);
      clip.keys.push_back(std::move(key));
    }
    clip.validate();
    return clip;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed clip document: ") + e.what());
  }
}

MotionKey sample_clip(const MotionClip& clip, double t, const Camera& fallback) {
  clip.validate();
  const auto camera_of = [&](const MotionKey& k) { return k.camera ? *k.camera : fallback; };
  const auto& keys = clip.keys;
  if (t <= keys.front().time || keys.size() == 1) return {t, keys.front().pose, camera_of(keys.front())};
  if (t >= keys.back().time) return {t, keys.back().pose, camera_of(keys.back())};
  std::size_t hi = 1;
  while (keys[hi].time < t) ++hi;
  const MotionKey& a = keys[hi - 1];
  const MotionKey& b = keys[hi];
  const double w = (t - a.time) / (b.time - a.time);
  MotionKey out;
  out.time = t;
  out.pose = a.pose;
  for (std::size_t j = 0; j < out.pose.joint_rotations.size(); ++j)
    out.pose.joint_rotations[j] = (1 - w) * a.pose.joint_rotations[j] + w * b.pose.joint_rotations[j];
  out.pose.root_translation = (1 - w) * a.pose.root_translation + w * b.pose.root_translation;
  if (a.pose.shape_coeffs.size() == b.pose.shape_coeffs.size())
    out.pose.shape_coeffs = (1 - w) * a.pose.shape_coeffs + w * b.pose.shape_coeffs;
  const Camera ca = camera_of(a), cb = camera_of(b);
  Camera c = ca;
  const Eigen::Quaterniond qa(ca.rotation), qb(cb.rotation);
  c.rotation = qa.slerp(w, qb).toRotationMatrix();
  // Centers move on a straight line.
  const Vector3 center = (1 - w) * ca.center() + w * cb.center();
  c.translation = -c.rotation * center;
  out.camera = c;
  return out;
}

std::vector<fs::path> play_clip(const Session& session, const MotionClip& clip, const fs::path& directory,
                                std::optional<double> fps) {
  clip.validate();
  require(!fps || (*fps > 0 && std::isfinite(*fps)), ErrorCode::InvalidInput, "frame rate must be positive");
  const auto base = session.snapshot();
  std::vector<double> times;
  if (fps) {
    const double t0 = clip.keys.front().time, t1 = clip.keys.back().time;
    const auto count = static_cast<std::size_t>(std::floor((t1 - t0) * *fps + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) times.push_back(t0 + static_cast<double>(k) / *fps);
  } else {
    for (const MotionKey& k : clip.keys) times.push_back(k.time);
  }
  fs::create_directories(directory);
  std::vector<fs::path> written;
  Camera camera = base->camera;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const MotionKey key = sample_clip(clip, times[k], camera);
    SessionState state = *base;
    state.pose = key.pose;
    require(state.pose.joint_rotations.size() == base->pose.joint_rotations.size(), ErrorCode::InvalidInput,
            "clip pose joint count does not match the mesh");
    state.camera = *key.camera;
    const fs::path out = directory / fmt::format("frame_{:05d}.png", k);
    write_png(render_state(state), out);
    written.push_back(out);
  }
  spdlog::info("wrote {} clip frames to {}", written.size(), directory.string());
  return written;
}

}  // namespace skinsplat
