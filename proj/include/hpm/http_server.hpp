#pragma once

#include "hpm/exchange_service.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace hpm::service {

/// JSON-over-HTTP front end for an ExchangeService.
///
///   POST /api/<command>                 body: JSON object, auth: "Authorization: Bearer <token>"
///   GET  /api/events?market=M&from=S    JSON array of events with seq >= S
///   GET  /api/stream?market=M&from=S    server-sent events, one per event, held open
///   GET  /api/markets                   market list
///   GET  /api/ledger                    full ledger (admin)
///   GET  /healthz
///
/// Errors come back as {"error": {"code": ..., "message": ...}} with a 4xx status.
class HttpServer {
public:
    explicit HttpServer(ExchangeService& service);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and starts serving on a background thread. Port 0 picks a free port.
    /// Throws std::runtime_error if the port cannot be bound.
    int start(const std::string& host, int port);
    /// Blocks the caller until stop() is called from elsewhere.
    void wait();
    void stop();
    int port() const { return port_; }

private:
    ExchangeService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace hpm::service
