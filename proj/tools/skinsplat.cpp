#include "skinsplat/error.hpp"
#include "skinsplat/mesh_io.hpp"
#include "skinsplat/parallel.hpp"
#include "skinsplat/ply.hpp"
#include "skinsplat/service.hpp"
#include "skinsplat/synthetic.hpp"
#include "skinsplat/toy_body.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>

using namespace skinsplat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  return json::parse(in);
}

void write_json_file(const json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

SkinnedMesh load_any_mesh(const fs::path& mesh, const std::string& weights) {
  if (mesh.extension() == ".obj") {
    require(!weights.empty(), ErrorCode::InvalidInput, "OBJ meshes need --weights");
    return load_obj_with_weights(mesh, weights);
  }
  return load_mesh_json(mesh);
}

std::pair<int, int> parse_size(const std::string& s) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(s);
  in >> w >> x >> h;
  require(in && (x == 'x' || x == 'X') && w > 0 && h > 0, ErrorCode::InvalidInput, "size must look like 256x256");
  return {w, h};
}

json breakdown_json(const LossBreakdown& l) {
  return {{"total", l.total},       {"l1", l.l1},     {"ssim", l.ssim},     {"l1_human", l.l1_human},
          {"ssim_human", l.ssim_human}, {"geo", l.geo}, {"offset", l.offset}, {"scale", l.scale}};
}

// ---------------------------------------------------------------------------

struct BakeArgs {
  std::string mesh, weights, out, png;
  int resolution = 512;
};

int run_bake(const BakeArgs& a) {
  const SkinnedMesh mesh = a.mesh.empty() ? make_toy_body() : load_any_mesh(a.mesh, a.weights);
  const auto t0 = Clock::now();
  const PositionTexture tex = bake(mesh, a.resolution);
  const double secs = seconds_since(t0);
  save_texture(tex, a.out);
  if (!a.png.empty()) write_texture_png(tex, a.png);
  std::cout << json{{"resolution", a.resolution}, {"valid_texels", tex.valid_count()}, {"seconds", secs}}.dump()
            << "\n";
  return 0;
}

struct AlignArgs {
  std::string mesh, weights, pose, joints2d, cloud, camera, out;
  double threshold = 0.0;
  std::uint64_t seed = 0;
};

int run_align(const AlignArgs& a) {
  const SkinnedMesh mesh = load_any_mesh(a.mesh, a.weights);
  const Pose pose = a.pose.empty() ? Pose::zero(mesh.joint_count()) : pose_from_json(mesh, read_json_file(a.pose));
  const JointTransforms t = forward_kinematics(mesh, pose);
  const json obs = read_json_file(a.joints2d);
  require(obs.contains("joints2d") && obs["joints2d"].is_object(), ErrorCode::InvalidInput,
          "2D joint file needs a \"joints2d\" map of joint name to pixel");
  std::vector<Correspondence> corr;
  std::vector<std::string> names;
  for (const auto& [name, px] : obs["joints2d"].items()) {
    names.push_back(name);
    const int j = mesh.find_joint(name);
    require(j >= 0, ErrorCode::InvalidInput, "unknown joint '" + name + "'");
    const auto k = static_cast<std::size_t>(j);
    corr.push_back({t[k] * mesh.joints[k].rest_position, Vector2(px.at(0).get<double>(), px.at(1).get<double>())});
  }
  const Camera cam = camera_from_json(read_json_file(a.camera));
  const PointCloud cloud = read_point_cloud(a.cloud);
  PlaneFitOptions plane;
  plane.seed = a.seed;
  if (a.threshold > 0) plane.inlier_threshold = a.threshold;
  const AlignmentReport r = align_body_to_scene(cloud.positions, corr, cam, plane);
  write_json_file(alignment_to_json(r.alignment), a.out);
  const Eigen::Vector4d p = r.plane.coefficients();
  std::cout << json{{"pnp_rms_px", r.pnp.rms_error},
                    {"pnp_iterations", r.pnp.iterations},
                    {"plane", {p(0), p(1), p(2), p(3)}},
                    {"scale", r.scale.scale},
                    {"scale_joint", names.at(r.scale.joint)},
                    {"discarded_joints", r.scale.discarded}}
                   .dump()
            << "\n";
  return 0;
}

struct SceneArgs {
  std::string bundle, scene, human, texture, mesh, weights, alignment, camera, pose;
};

SceneBundle load_scene(const SceneArgs& a) {
  SceneBundle b;
  if (!a.bundle.empty()) {
    b = load_bundle(a.bundle);
  } else {
    require(!a.scene.empty() && !a.human.empty() && !a.texture.empty() && !a.mesh.empty() && !a.camera.empty(),
            ErrorCode::InvalidInput, "give --bundle or all of --scene --human --texture --mesh --camera");
    b.problem.mesh = load_any_mesh(a.mesh, a.weights);
    b.texture = load_texture(a.texture);
    b.problem.human = load_human(a.human, b.texture);
    b.problem.background = load_background_ply(a.scene);
    if (!a.alignment.empty()) b.problem.alignment = alignment_from_json(read_json_file(a.alignment));
    b.camera = camera_from_json(read_json_file(a.camera));
    b.pose = Pose::zero(b.problem.mesh.joint_count());
  }
  if (!a.bundle.empty() && !a.camera.empty()) b.camera = camera_from_json(read_json_file(a.camera));
  if (!a.pose.empty()) b.pose = pose_from_json(b.problem.mesh, read_json_file(a.pose));
  return b;
}

void add_scene_options(CLI::App* app, SceneArgs& a) {
  app->add_option("--bundle", a.bundle, "Scene bundle manifest (bundle.json)");
  app->add_option("--scene", a.scene, "Background Gaussians (.ply)");
  app->add_option("--human", a.human, "Human attributes (.bin)");
  app->add_option("--texture", a.texture, "Position texture the human was built from (.bin)");
  app->add_option("--mesh", a.mesh, "Skinned mesh (.json or .obj)");
  app->add_option("--weights", a.weights, "Skinning weights document for an OBJ mesh");
  app->add_option("--alignment", a.alignment, "Body-to-scene alignment (.json)");
  app->add_option("--camera", a.camera, "Camera (.json); overrides the bundle camera");
  app->add_option("--pose", a.pose, "Pose (.json); overrides the bundle pose");
}

struct RenderArgs {
  SceneArgs scene;
  std::string out, pfm, mask;
};

int run_render(const RenderArgs& a) {
  const Session session(load_scene(a.scene));
  const auto state = session.snapshot();
  const auto t0 = Clock::now();
  const Image img = render_state(*state);
  const double ms = seconds_since(t0) * 1e3;
  write_png(img, a.out);
  if (!a.pfm.empty()) write_pfm(img, a.pfm);
  if (!a.mask.empty()) write_mask_png(human_coverage(*state), a.mask);
  std::cout << json{{"out", a.out}, {"width", img.width}, {"height", img.height}, {"render_ms", ms}}.dump() << "\n";
  return 0;
}

struct FitArgs {
  std::string bundle, frames, config, out, eval;
  int iterations = -1;
  int checkpoint_every = -1;
};

int run_fit(const FitArgs& a) {
  SceneBundle b = load_bundle(a.bundle);
  const std::vector<Frame> frames = load_frames(a.frames, b.problem.mesh);
  FitConfig cfg = a.config.empty() ? FitConfig{} : fit_config_from_json(read_json_file(a.config));
  if (a.iterations >= 0) cfg.iterations = a.iterations;
  if (a.checkpoint_every >= 0) cfg.checkpoint_every = a.checkpoint_every;
  cfg.validate();
  const fs::path out = a.out;
  fs::create_directories(out);
  write_json_file(fit_config_to_json(cfg), out / "config.json");

  const LossBreakdown initial = evaluate(b.problem, frames, cfg);
  spdlog::info("initial loss {:.6f} over {} frames", initial.total, frames.size());
  const auto checkpoint = [&](int it, const FitProblem& p) {
    SceneBundle snap = b;
    snap.problem = p;
    save_bundle(snap, out / "checkpoints" / fmt::format("iter_{:06d}", it));
    spdlog::info("checkpoint at iteration {}", it);
  };
  const auto t0 = Clock::now();
  const FitResult r = optimize(b.problem, frames, cfg, checkpoint);
  const double secs = seconds_since(t0);

  std::ofstream csv(out / "loss.csv");
  csv << "iteration,frame,total,l1,ssim,l1_human,ssim_human,geo,offset,scale\n";
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const LossBreakdown& l = r.history[i];
    csv << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", i + 1, r.frame_order[i], l.total,
                       l.l1, l.ssim, l.l1_human, l.ssim_human, l.geo, l.offset, l.scale);
  }
  save_bundle(b, out / "bundle");
  const LossBreakdown final_loss = evaluate(b.problem, frames, cfg);
  json summary = {{"iterations", cfg.iterations},
                  {"seconds", secs},
                  {"frames", frames.size()},
                  {"initial", breakdown_json(initial)},
                  {"final", breakdown_json(final_loss)}};
  if (!a.eval.empty()) {
    json views = json::array();
    for (const Frame& f : load_frames(a.eval, b.problem.mesh))
      views.push_back(psnr(render(compose_scene(b.problem, f.pose), f.camera, cfg.render), f.image));
    summary["eval_psnr"] = views;
  }
  write_json_file(summary, out / "summary.json");
  std::cout << summary.dump() << "\n";
  return 0;
}

struct BenchArgs {
  std::size_t points = 50000;
  std::string size = "256x256";
  int frames = 20;
  std::uint64_t seed = 0;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  const auto [w, h] = parse_size(a.size);
  require(a.frames > 0, ErrorCode::InvalidInput, "--frames must be positive");
  const RenderableScene scene = bench_scene(a.points, a.seed, w, h);
  const Camera cam = bench_camera(w, h);
  RenderStats stats;
  render(scene, cam, {}, &stats);  // warm-up
  std::vector<double> ms;
  for (int k = 0; k < a.frames; ++k) {
    const auto t0 = Clock::now();
    render(scene, cam);
    ms.push_back(seconds_since(t0) * 1e3);
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  const json report = {{"version", 1},
                       {"points", a.points},
                       {"width", w},
                       {"height", h},
                       {"frames", a.frames},
                       {"threads", worker_count()},
                       {"culled_splats", stats.culled},
                       {"ms_mean", mean},
                       {"ms_median", sorted[sorted.size() / 2]},
                       {"ms_min", sorted.front()},
                       {"ms_max", sorted.back()},
                       {"fps", 1e3 / mean}};
  if (!a.out.empty()) write_json_file(report, a.out);
  std::cout << report.dump() << "\n";
  return 0;
}

struct ServeArgs {
  SceneArgs scene;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui, clip_root = "clips";
};

RenderService* g_service = nullptr;

int run_serve(const ServeArgs& a) {
  Session session(load_scene(a.scene));
  ServiceOptions opt;
  opt.clip_root = a.clip_root;
  if (!a.ui.empty()) opt.ui_directory = a.ui;
  RenderService service(session, opt);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  service.run(a.host, a.port);
  g_service = nullptr;
  return 0;
}

struct PlayArgs {
  SceneArgs scene;
  std::string clip, out;
  double fps = 0.0;
};

int run_play(const PlayArgs& a) {
  const Session session(load_scene(a.scene));
  const MotionClip clip = clip_from_json(session.scene().problem.mesh, read_json_file(a.clip));
  const auto frames = play_clip(session, clip, a.out, a.fps > 0 ? std::optional<double>(a.fps) : std::nullopt);
  std::cout << json{{"frames", frames.size()}, {"directory", a.out}}.dump() << "\n";
  return 0;
}

struct SynthArgs {
  std::string out;
  int texture = 128;
  std::size_t background = 500;
  int cameras = 8;
  int size = 64;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  SyntheticFitOptions o;
  o.texture_resolution = a.texture;
  o.background_count = a.background;
  o.cameras = a.cameras;
  o.image_size = a.size;
  o.seed = a.seed;
  const SyntheticFit fx = make_synthetic_fit(o);
  const fs::path out = a.out;
  SceneBundle b;
  b.texture = fx.texture;
  b.camera = fx.held_out.camera;
  b.pose = fx.held_out.pose;
  b.problem = fx.truth;
  save_bundle(b, out / "truth");
  b.problem = fx.initial;
  save_bundle(b, out / "initial");
  save_frames(fx.frames, fx.truth.mesh, out / "frames");
  save_frames({fx.held_out}, fx.truth.mesh, out / "held_out");
  std::cout << json{{"directory", a.out},
                    {"texels", fx.truth.human.size()},
                    {"background", fx.truth.background.size()},
                    {"frames", fx.frames.size()}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skinned Gaussian avatars: bake, align, render, fit, bench, serve, play"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  BakeArgs bake_args;
  auto* bake_cmd = app.add_subcommand("bake", "Bake a position texture from a skinned mesh");
  bake_cmd->add_option("--mesh", bake_args.mesh, "Skinned mesh (.json or .obj); default is the built-in toy body");
  bake_cmd->add_option("--weights", bake_args.weights, "Skinning weights document for an OBJ mesh");
  bake_cmd->add_option("--resolution", bake_args.resolution, "Texture size in texels")->check(CLI::PositiveNumber);
  bake_cmd->add_option("--out", bake_args.out, "Output texture (.bin)")->required();
  bake_cmd->add_option("--png", bake_args.png, "Optional position visualization");

  AlignArgs align_args;
  auto* align_cmd = app.add_subcommand("align", "Align the body to the scene from 2D joints and a point cloud");
  align_cmd->add_option("--mesh", align_args.mesh, "Skinned mesh")->required();
  align_cmd->add_option("--weights", align_args.weights, "Skinning weights document for an OBJ mesh");
  align_cmd->add_option("--pose", align_args.pose, "Body pose the 2D joints were observed in");
  align_cmd->add_option("--joints2d", align_args.joints2d, "2D joint detections (.json)")->required();
  align_cmd->add_option("--cloud", align_args.cloud, "Scene point cloud (.ply)")->required();
  align_cmd->add_option("--camera", align_args.camera, "Scene camera of the detection image")->required();
  align_cmd->add_option("--threshold", align_args.threshold, "Plane inlier threshold in scene units");
  align_cmd->add_option("--seed", align_args.seed, "RANSAC seed");
  align_cmd->add_option("--out", align_args.out, "Output alignment (.json)")->required();

  RenderArgs render_args;
  auto* render_cmd = app.add_subcommand("render", "Render one frame");
  add_scene_options(render_cmd, render_args.scene);
  render_cmd->add_option("--out", render_args.out, "Output image (.png)")->required();
  render_cmd->add_option("--pfm", render_args.pfm, "Also write a float image (.pfm)");
  render_cmd->add_option("--human-mask", render_args.mask, "Also write the human coverage mask (.png)");

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit Gaussian attributes to a frame set");
  fit_cmd->add_option("--bundle", fit_args.bundle, "Initial scene bundle")->required();
  fit_cmd->add_option("--frames", fit_args.frames, "Training frame set (frames.json)")->required();
  fit_cmd->add_option("--config", fit_args.config, "Fit configuration (.json)");
  fit_cmd->add_option("--iterations", fit_args.iterations, "Override the configured iteration count");
  fit_cmd->add_option("--checkpoint-every", fit_args.checkpoint_every, "Override the checkpoint interval");
  fit_cmd->add_option("--eval", fit_args.eval, "Held-out frame set to report PSNR on");
  fit_cmd->add_option("--out", fit_args.out, "Run directory")->required();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Measure forward render throughput");
  bench_cmd->add_option("--points", bench_args.points, "Gaussian count");
  bench_cmd->add_option("--size", bench_args.size, "Image size WxH");
  bench_cmd->add_option("--frames", bench_args.frames, "Timed frames");
  bench_cmd->add_option("--seed", bench_args.seed, "Scene seed");
  bench_cmd->add_option("--out", bench_args.out, "Also write the report here");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP pose-editing interface");
  add_scene_options(serve_cmd, serve_args.scene);
  serve_cmd->add_option("--host", serve_args.host, "Bind address");
  serve_cmd->add_option("--port", serve_args.port, "Port");
  serve_cmd->add_option("--ui", serve_args.ui, "Static UI directory served under /ui");
  serve_cmd->add_option("--clip-root", serve_args.clip_root, "Directory POST /clip writes into");

  PlayArgs play_args;
  auto* play_cmd = app.add_subcommand("play", "Render a motion clip to a PNG sequence");
  add_scene_options(play_cmd, play_args.scene);
  play_cmd->add_option("--clip", play_args.clip, "Motion clip (.json)")->required();
  play_cmd->add_option("--fps", play_args.fps, "Resample at this frame rate; default one frame per key");
  play_cmd->add_option("--out", play_args.out, "Output directory")->required();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic fitting fixture (truth, initial, frames)");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--texture", synth_args.texture, "Position texture resolution");
  synth_cmd->add_option("--background", synth_args.background, "Background Gaussian count");
  synth_cmd->add_option("--cameras", synth_args.cameras, "Training cameras");
  synth_cmd->add_option("--size", synth_args.size, "Image size in pixels");
  synth_cmd->add_option("--seed", synth_args.seed, "Fixture seed");

  std::string toy_out;
  auto* toy_cmd = app.add_subcommand("toy-body", "Write the built-in toy body as a mesh document");
  toy_cmd->add_option("--out", toy_out, "Output mesh (.json)")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*bake_cmd) return run_bake(bake_args);
    if (*align_cmd) return run_align(align_args);
    if (*render_cmd) return run_render(render_args);
    if (*fit_cmd) return run_fit(fit_args);
    if (*bench_cmd) return run_bench(bench_args);
    if (*serve_cmd) return run_serve(serve_args);
    if (*play_cmd) return run_play(play_args);
    if (*synth_cmd) return run_synth(synth_args);
    if (*toy_cmd) {
      save_mesh_json(make_toy_body(), toy_out);
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
