#include "http_api.hpp"

#include <algorithm>
#include <string_view>

#include <httplib.h>

#include "wsic/error.hpp"
#include "wsic/png_io.hpp"

using nlohmann::json;

namespace wsic::app {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    const int status = http_status(code);
    send_json(res, status, {{"error", {{"code", to_string(code)}, {"message", message}}}, {"status", status}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ParseError, std::string("request body is not valid JSON: ") + e.what());
    }
}

// Runs a handler and converts every failure into a JSON error response.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
        send_error(res, ErrorCode::InvalidArgument, e.what());
    } catch (const std::exception& e) {
        send_error(res, ErrorCode::Io, e.what());
    }
}

} // namespace

void register_routes(httplib::Server& server, SessionStore& store) {
    server.Get("/slides", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store.list_slides()); });
    });

    server.Get(R"(/slides/([^/]+)/image\.png)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const auto path = store.data_root().image_path(id);
            require(path.has_value(), ErrorCode::NotFound, "slide '" + id + "' has no image");
            int max_side = 1024;
            if (req.has_param("max")) {
                try {
                    max_side = std::stoi(req.get_param_value("max"));
                } catch (const std::exception&) {
                    fail(ErrorCode::InvalidArgument, "'max' must be an integer");
                }
                require(max_side >= 16, ErrorCode::InvalidArgument, "'max' must be >= 16");
            }
            const Raster image = read_png(*path);
            const int side = std::max(image.width(), image.height());
            const int factor = std::max(1, (side + max_side - 1) / max_side);
            const auto bytes = encode_png(factor > 1 ? downsample(image, factor) : image);
            res.status = 200;
            res.set_header("X-Downsample-Factor", std::to_string(factor));
            res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        });
    });

    server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, store.create(parse_body(req))); });
    });

    server.Get(R"(/sessions/([^/]+)/heatmap)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store.heatmap(req.matches[1])); });
    });

    server.Get(R"(/sessions/([^/]+)/uncertainty)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store.uncertainty(req.matches[1])); });
    });

    server.Get(R"(/sessions/([^/]+)/metrics)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store.metrics(req.matches[1])); });
    });

    server.Post(R"(/sessions/([^/]+)/scribbles)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, store.add_scribble(req.matches[1], parse_body(req))); });
    });

    server.Post(R"(/sessions/([^/]+)/passes)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, store.run_pass(req.matches[1], parse_body(req))); });
    });

    // Unknown routes and methods still answer JSON.
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const int status = res.status;
        send_json(res, status,
                  {{"error", {{"code", status == 404 ? "not_found" : "http_error"},
                              {"message", "no route for " + req.method + " " + req.path}}},
                   {"status", status}});
    });
}

bool serve(SessionStore& store, const ServeOptions& options, const std::function<void(int)>& on_bound) {
    httplib::Server server;
    register_routes(server, store);
    int port = options.port;
    if (port == 0) {
        port = server.bind_to_any_port(options.host);
        if (port < 0) return false;
    } else if (!server.bind_to_port(options.host, port)) {
        return false;
    }
    if (on_bound) on_bound(port);
    return server.listen_after_bind();
}

} // namespace wsic::app
