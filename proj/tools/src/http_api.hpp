#pragma once

#include <functional>
#include <string>

#include "session_store.hpp"

namespace httplib {
class Server;
}

namespace wsic::app {

/// Installs every API route on `server`; handlers answer JSON for success and
/// for errors ({"error": {"code", "message"}, "status"}).
void register_routes(httplib::Server& server, SessionStore& store);

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 binds an ephemeral port
};

/// Binds, reports the bound port through `on_bound`, then blocks serving.
/// Returns false when the address cannot be bound.
bool serve(SessionStore& store, const ServeOptions& options, const std::function<void(int)>& on_bound);

} // namespace wsic::app
