#pragma once

#include "hpm/maker_bot.hpp"
#include "hpm/market_engine.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpm::service {

using market::AccountId;
using market::Cents;
using market::MarketId;

/// Error with an HTTP-style status and a stable machine-readable code.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, const std::string& what)
        : std::runtime_error(what), status_(status), code_(std::move(code))
    {
    }
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

struct Event {
    std::uint64_t seq = 0;
    std::string kind;  // BOOK, TRADE, QUOTES, BELIEFS, SETTLED
    nlohmann::json payload;
};

nlohmann::json to_json(const Event& e);

struct BotConfig {
    std::vector<double> beliefs;
    Cents cash = 0;
    double rho = 1.0;
};

struct ServiceConfig {
    std::string admin_token;
    std::optional<std::filesystem::path> journal;    // append-only command log, replayed at startup
    std::optional<std::filesystem::path> audit_log;  // JSON lines, one per bot quote generation
    std::size_t recent_fills = 20;
};

/// Exchange state machine behind the network adapter. Every successful mutating command
/// is appended to the journal; constructing a service over an existing journal replays it.
/// All commands are serialized by one mutex, which also gives each market a single total
/// order of events.
class ExchangeService {
public:
    explicit ExchangeService(ServiceConfig config);
    ~ExchangeService();

    ExchangeService(const ExchangeService&) = delete;
    ExchangeService& operator=(const ExchangeService&) = delete;

    nlohmann::json create_market(const std::string& admin_token, const std::string& name,
                                 const std::vector<std::string>& labels, const std::optional<BotConfig>& bot);
    nlohmann::json open_account(const std::string& name, Cents cash);
    nlohmann::json place_order(const std::string& token, MarketId market, int bin, market::Side side, int price_cents,
                               std::int64_t qty);
    nlohmann::json cancel_order(const std::string& token, market::OrderId order);
    nlohmann::json update_beliefs(const std::string& admin_token, MarketId market, const std::vector<double>& p);
    nlohmann::json settle(const std::string& admin_token, MarketId market, int winning_bin);
    nlohmann::json get_book(MarketId market) const;
    nlohmann::json get_positions(const std::string& token) const;
    nlohmann::json list_markets() const;
    nlohmann::json ledger() const;

    /// JSON command dispatch used by the HTTP adapter. `command` is the path name
    /// (create-market, place-order, ...).
    nlohmann::json dispatch(const std::string& command, const nlohmann::json& body, const std::string& token);

    /// Events of a market with seq >= from.
    std::vector<Event> events(MarketId market, std::uint64_t from) const;
    /// Like events() but blocks up to `timeout` for at least one event.
    std::vector<Event> wait_events(MarketId market, std::uint64_t from, std::chrono::milliseconds timeout) const;
    /// Wakes all waiters; later waits return immediately.
    void shutdown();
    bool is_shut_down() const;

    /// Throws ServiceError (401/403) unless token is the admin credential.
    void check_admin(const std::string& token) const { require_admin(token); }

    std::size_t journal_entries() const;
    AccountId account_for_token(const std::string& token) const;
    std::optional<AccountId> bot_account(MarketId market) const;

private:
    struct MarketState {
        std::vector<Event> events;
        std::unique_ptr<bot::MakerBot> bot;
        std::optional<nlohmann::json> settlement;
    };

    void require_admin(const std::string& token) const;
    AccountId authenticate(const std::string& token) const;
    MarketState& state_of(MarketId market);
    const MarketState& state_of(MarketId market) const;

    void emit(MarketId market, std::string kind, nlohmann::json payload);
    void emit_book(MarketId market);
    void emit_trades(MarketId market, const std::vector<market::Fill>& fills);
    void run_requote(MarketId market);
    void journal(const nlohmann::json& entry);
    void replay(const std::filesystem::path& path);
    void apply(const nlohmann::json& entry);

    nlohmann::json do_create_market(const std::string& name, const std::vector<std::string>& labels,
                                    const std::optional<BotConfig>& bot);
    nlohmann::json do_open_account(const std::string& name, Cents cash, const std::string& token);
    nlohmann::json do_place_order(AccountId account, MarketId market, int bin, market::Side side, int price,
                                  std::int64_t qty);
    nlohmann::json do_cancel_order(AccountId account, market::OrderId order);
    nlohmann::json do_update_beliefs(MarketId market, const std::vector<double>& p);
    nlohmann::json do_settle(MarketId market, int winning_bin);
    nlohmann::json positions_of(AccountId account) const;

    ServiceConfig config_;
    market::Engine engine_;
    std::map<MarketId, MarketState> markets_;
    std::map<std::string, AccountId> tokens_;
    std::ofstream journal_out_;
    std::ofstream audit_out_;
    std::size_t journal_entries_ = 0;
    bool replaying_ = false;
    bool shut_down_ = false;
    mutable std::mutex mutex_;
    mutable std::condition_variable events_cv_;
};

/// Maps engine and validation exceptions to ServiceError; rethrows anything else.
[[noreturn]] void translate_exception(std::exception_ptr e);

std::string generate_token();

}  // namespace hpm::service
