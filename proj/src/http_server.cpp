// SPDX-License-Identifier: Apache-2.0
#include "trajsig/http_server.hpp"

#include <httplib.h>

#include "trajsig/analysis.hpp"
#include "trajsig/stats.hpp"

namespace trajsig {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, nlohmann::ordered_json{{"code", code}, {"message", message}});
}

std::string annotator_param(const httplib::Request& req) {
  const auto a = req.get_param_value("annotator");
  if (a.empty()) throw AnnotationError(AnnotationError::Code::InvalidRequest, "missing ?annotator= parameter");
  return a;
}

}  // namespace

HttpServer::HttpServer(AnnotationService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;

  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const AnnotationError& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
      } catch (const stats::StatsError& e) {
        send_error(res, 422, to_string(e.code()), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "InvalidRequest", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  };

  auto require_admin = [this](const httplib::Request& req) {
    const auto header = req.get_header_value("Authorization");
    if (options_.admin_token.empty() || header != "Bearer " + options_.admin_token)
      throw AnnotationError(AnnotationError::Code::Unauthorized, "admin token required");
  };

  s.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ok"}});
        }));
  s.Get("/api/guidelines", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, annotator_guidelines());
        }));
  s.Get("/api/queue/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.next_item(annotator_param(req)));
        }));
  s.Get(R"(/api/item/([0-9A-Za-z_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.item(req.matches[1]));
        }));
  s.Post("/api/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = nlohmann::json::parse(req.body);
           send_json(res, 200, service_.submit_label(label_submission_from_json(body)));
         }));
  s.Get("/api/progress", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto a = annotator_param(req);
          const auto p = service_.progress(a);
          send_json(res, 200, {{"annotator", a}, {"labeled", p.labeled}, {"total", p.total}});
        }));
  s.Get("/api/export", guarded([this, require_admin](const httplib::Request& req, httplib::Response& res) {
          require_admin(req);
          res.status = 200;
          res.set_content(service_.export_labels(), "application/x-ndjson");
        }));
  s.Get("/api/report", guarded([this, require_admin](const httplib::Request& req, httplib::Response& res) {
          require_admin(req);
          send_json(res, 200, to_json(compute_report(parse_export(service_.export_labels()))));
        }));
  s.Post("/api/admin/revoke", guarded([this, require_admin](const httplib::Request& req, httplib::Response& res) {
           require_admin(req);
           const auto body = nlohmann::json::parse(req.body);
           service_.revoke(body.at("annotator_id").get<std::string>(), body.at("blinded_id").get<std::string>());
           send_json(res, 200, {{"revoked", true}});
         }));

  if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir))
    s.set_mount_point("/", options_.static_dir.string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen_after_bind() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace trajsig
