#pragma once

#include "skinsplat/session.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace skinsplat {

struct ServiceOptions {
  /// POST /clip writes below this directory; requests name a relative subdirectory.
  std::filesystem::path clip_root = "clips";
  /// Static files served under /ui when set.
  std::optional<std::filesystem::path> ui_directory;
};

/// HTTP front end of a Session:
///   GET /meta, GET /pose, PUT /pose, PUT /camera, GET /camera, GET /frame, POST /clip, /ui/...
class RenderService {
 public:
  RenderService(Session& session, ServiceOptions options = {});
  ~RenderService();
  RenderService(const RenderService&) = delete;
  RenderService& operator=(const RenderService&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace skinsplat
