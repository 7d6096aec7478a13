// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "trajsig/annotation.hpp"

namespace httplib {
class Server;
}

namespace trajsig {

struct ServerOptions {
  // Empty disables the admin endpoints.
  std::string admin_token;
  // Mounted at "/" when set and present on disk.
  std::filesystem::path static_dir;
};

/// JSON API over an AnnotationService:
///   GET  /api/health
///   GET  /api/guidelines
///   GET  /api/queue/next?annotator=ID
///   GET  /api/item/{blinded_id}
///   POST /api/labels
///   GET  /api/progress?annotator=ID
///   GET  /api/export                 (admin)
///   GET  /api/report                 (admin)
///   POST /api/admin/revoke           (admin)
/// Admin requests carry `Authorization: Bearer <token>`. Errors are
/// {"code": ..., "message": ...}.
class HttpServer {
 public:
  HttpServer(AnnotationService& service, ServerOptions options);
  ~HttpServer();

  /// Binds to `port`, or an ephemeral port when 0. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  void listen_after_bind();
  void stop();

 private:
  AnnotationService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace trajsig
