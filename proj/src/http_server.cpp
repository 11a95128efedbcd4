#include "hpm/http_server.hpp"

#include <httplib.h>

#include <chrono>

namespace hpm::service {

using nlohmann::json;

namespace {

std::string bearer(const httplib::Request& req)
{
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.rfind(prefix, 0) == 0) return h.substr(prefix.size());
    return {};
}

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

template <typename F>
void guarded(httplib::Response& res, F&& f)
{
    try {
        try {
            f();
        } catch (...) {
            translate_exception(std::current_exception());
        }
    } catch (const ServiceError& e) {
        send_error(res, e.status(), e.code(), e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

std::uint64_t query_u64(const httplib::Request& req, const std::string& key, std::optional<std::uint64_t> fallback)
{
    if (!req.has_param(key)) {
        if (fallback) return *fallback;
        throw ServiceError(400, "malformed_request", "missing query parameter '" + key + "'");
    }
    const auto v = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const auto n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ServiceError(400, "malformed_request", "query parameter '" + key + "' must be a non-negative integer");
    }
}

std::string sse_frame(const Event& e)
{
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.kind + "\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

HttpServer::HttpServer(ExchangeService& service) : service_(service), server_(std::make_unique<httplib::Server>())
{
    auto& srv = *server_;
    // Each open event stream pins a worker thread.
    srv.new_task_queue = [] { return new httplib::ThreadPool(32); };

    srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    srv.Post(R"(/api/([a-z\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = req.body.empty() ? json::object() : json::parse(req.body);
            send_json(res, 200, service_.dispatch(req.matches[1], body, bearer(req)));
        });
    });

    srv.Get("/api/markets", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service_.list_markets()); });
    });

    srv.Get("/api/book", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service_.get_book(query_u64(req, "market", std::nullopt))); });
    });

    srv.Get("/api/ledger", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            service_.check_admin(bearer(req));
            send_json(res, 200, service_.ledger());
        });
    });

    srv.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json out = json::array();
            for (const auto& e : service_.events(query_u64(req, "market", std::nullopt), query_u64(req, "from", 0)))
                out.push_back(to_json(e));
            send_json(res, 200, out);
        });
    });

    srv.Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto market = query_u64(req, "market", std::nullopt);
            const auto from = query_u64(req, "from", 0);
            service_.events(market, 0);  // 404 for unknown markets before the stream opens
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, market, next = from](std::size_t, httplib::DataSink& sink) mutable {
                    if (service_.is_shut_down()) {
                        sink.done();
                        return false;
                    }
                    const auto evs = service_.wait_events(market, next, std::chrono::milliseconds(500));
                    if (evs.empty()) {
                        const std::string ping = ": keepalive\n\n";
                        return sink.write(ping.data(), ping.size());
                    }
                    for (const auto& e : evs) {
                        const auto frame = sse_frame(e);
                        if (!sink.write(frame.data(), frame.size())) return false;
                        next = e.seq + 1;
                    }
                    return true;
                });
        });
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port)
{
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        if (port_ <= 0) throw std::runtime_error("cannot bind to any port on " + host);
    } else {
        if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind to port " + std::to_string(port));
        port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpServer::wait()
{
    if (thread_.joinable()) thread_.join();
}

void HttpServer::stop()
{
    service_.shutdown();
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace hpm::service
