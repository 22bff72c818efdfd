#pragma once

#include <filesystem>
#include <string>

#include "craftlang/service/session.hpp"

#include <httplib.h>

namespace craftlang::service {

/// Routes /api/* to the service and serves `web_dir` (if it exists) at "/".
inline void mount(httplib::Server& svr, SessionService& service, const std::filesystem::path& web_dir = {}) {
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        std::string token = req.get_header_value("X-Session-Token");
        if (const auto auth = req.get_header_value("Authorization"); auth.rfind("Bearer ", 0) == 0) token = auth.substr(7);
        Response r;
        try {
            r = service.handle(req.method, req.path, req.body, token);
        } catch (const std::exception& e) {
            r = error(500, e.what());
        }
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.Get(R"(/api/.*)", forward);
    svr.Post(R"(/api/.*)", forward);
    svr.Put(R"(/api/.*)", forward);
    svr.Delete(R"(/api/.*)", forward);
    if (!web_dir.empty() && std::filesystem::is_directory(web_dir)) svr.set_mount_point("/", web_dir.string());
}

}  // namespace craftlang::service
