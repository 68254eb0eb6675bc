#pragma once

#include <memory>
#include <string>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that clashes with Eigen parameter names.
#include "mlc/service.hpp"

#include <httplib.h>

#include "log.hpp"

namespace mlc::cli {

/// Routes every request through handle_request; the bundle is shared read-only across worker threads.
inline std::unique_ptr<httplib::Server> make_server(const ArtifactBundle& b) {
    auto srv = std::make_unique<httplib::Server>();
    auto route = [&b](const httplib::Request& req, httplib::Response& res) {
        auto r = handle_request(b, req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
        log::debug(req.method + " " + req.path + " -> " + std::to_string(r.status));
    };
    for (const char* path : {"/health", "/models", "/frontier", "/scenario"}) {
        srv->Get(path, route);
        srv->Post(path, route);
        srv->Put(path, route);
        srv->Delete(path, route);
    }
    srv->set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        auto r = error_response(res.status, res.status == 404 ? "not_found" : "http_error", "request to " + req.path + " failed");
        res.set_content(r.body, "application/json");
    });
    return srv;
}

inline int serve_bundle(const ArtifactBundle& b, const std::string& host, int port) {
    auto srv = make_server(b);
    if (!srv->bind_to_port(host, port)) {
        log::error("cannot bind " + host + ":" + std::to_string(port));
        return 5;
    }
    log::info("serving on " + host + ":" + std::to_string(port));
    srv->listen_after_bind();
    return 0;
}

} // namespace mlc::cli
