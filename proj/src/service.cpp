#include "skinsplat/service.hpp"

#include "skinsplat/error.hpp"

#include <httplib.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <thread>

namespace skinsplat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void send_json(httplib::Response& res, const json& doc, int status = 200) {
  res.status = status;
  res.set_content(doc.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("request body is not JSON: ") + e.what());
  }
}

// Relative, no "..", no root: keeps clip output inside the configured root.
bool safe_relative(const fs::path& p) {
  if (p.empty() || p.is_absolute() || p.has_root_name()) return false;
  for (const auto& part : p)
    if (part == "..") return false;
  return true;
}

}  // namespace

struct RenderService::Impl {
  Session& session;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;

  Impl(Session& s, ServiceOptions o) : session(s), options(std::move(o)) { routes(); }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code() == ErrorCode::Io ? 500 : 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    server.Get("/meta", guarded([this](const httplib::Request&, httplib::Response& res) {
      const SceneBundle& scene = session.scene();
      const auto state = session.snapshot();
      json joints = json::array();
      for (const Joint& j : scene.problem.mesh.joints) joints.push_back({{"name", j.name}, {"parent", j.parent}});
      send_json(res, {{"version", 1},
                      {"joints", joints},
                      {"resolution", {state->camera.width, state->camera.height}},
                      {"texture_resolution", {scene.texture.width, scene.texture.height}},
                      {"texel_count", scene.problem.human.size()},
                      {"background_count", scene.problem.background.size()},
                      {"generation", state->generation}});
    }));
    server.Get("/pose", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto state = session.snapshot();
      json doc = pose_to_json(session.scene().problem.mesh, state->pose);
      doc["generation"] = state->generation;
      send_json(res, doc);
    }));
    server.Put("/pose", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto state = session.set_pose(pose_update_from_json(parse_body(req)));
      json doc = pose_to_json(session.scene().problem.mesh, state->pose);
      doc["generation"] = state->generation;
      send_json(res, doc);
    }));
    server.Get("/camera", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, camera_to_json(session.snapshot()->camera));
    }));
    server.Put("/camera", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto state = session.set_camera(camera_from_json(parse_body(req)));
      json doc = camera_to_json(state->camera);
      doc["generation"] = state->generation;
      send_json(res, doc);
    }));
    server.Get("/frame", guarded([this](const httplib::Request&, httplib::Response& res) {
      // Snapshot at serve time: queued requests see the newest pose.
      const auto state = session.snapshot();
      const auto t0 = std::chrono::steady_clock::now();
      const Image image = render_state(*state);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const std::vector<unsigned char> png = encode_png(image);
      res.set_header("X-Render-Millis", fmt::format("{:.3f}", ms));
      res.set_header("X-Snapshot-Generation", std::to_string(state->generation));
      res.set_header("Cache-Control", "no-store");
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));
    server.Post("/clip", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      require(body.contains("clip"), ErrorCode::InvalidInput, "request needs a \"clip\" document");
      const fs::path sub = body.value("directory", std::string("clip"));
      require(safe_relative(sub), ErrorCode::InvalidInput, "clip directory must be a relative path without '..'");
      std::optional<double> fps;
      if (body.contains("fps")) fps = body["fps"].get<double>();
      const MotionClip clip = clip_from_json(session.scene().problem.mesh, body["clip"]);
      const auto t0 = std::chrono::steady_clock::now();
      const auto frames = play_clip(session, clip, options.clip_root / sub, fps);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      json files = json::array();
      for (const auto& f : frames) files.push_back(f.lexically_relative(options.clip_root).generic_string());
      send_json(res, {{"frames", frames.size()}, {"files", files}, {"millis", ms}});
    }));
    if (options.ui_directory) {
      require(server.set_mount_point("/ui", options.ui_directory->string()), ErrorCode::Io,
              "cannot serve UI directory " + options.ui_directory->string());
    }
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

RenderService::RenderService(Session& session, ServiceOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {}

RenderService::~RenderService() { stop(); }

int RenderService::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  require(bound > 0, ErrorCode::Io, fmt::format("cannot bind {}:{}", host, port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  spdlog::info("render service listening on {}:{}", host, bound);
  return bound;
}

void RenderService::run(const std::string& host, int port) {
  spdlog::info("render service listening on {}:{}", host, port);
  require(impl_->server.listen(host, port), ErrorCode::Io, fmt::format("cannot serve on {}:{}", host, port));
}

void RenderService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace skinsplat
