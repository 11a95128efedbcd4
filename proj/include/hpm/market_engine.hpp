#pragma once

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace hpm::market {

using Cents = std::int64_t;
using AccountId = std::uint64_t;
using MarketId = std::uint64_t;
using OrderId = std::uint64_t;

inline constexpr Cents kContractPayout = 100;
inline constexpr int kMinPrice = 1;
inline constexpr int kMaxPrice = 99;
inline constexpr int kMinBins = 2;
inline constexpr int kMaxBins = 64;

enum class Side { Buy, Sell };

std::string to_string(Side s);
Side side_from_string(std::string_view s);

enum class ErrorCode {
    InsufficientMargin,
    UnknownMarket,
    UnknownBin,
    InvalidPrice,
    InvalidQuantity,
    UnknownAccount,
    UnknownOrder,
    NotOwner,
    MarketClosed,
    AlreadySettled,
    DuplicateName,
    PositionLimit,
    InvalidArgument,
};

class EngineError : public std::runtime_error {
public:
    EngineError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct Order {
    OrderId id = 0;
    AccountId account = 0;
    MarketId market = 0;
    int bin = 0;
    Side side = Side::Buy;
    int price = 0;               // cents
    std::int64_t quantity = 0;   // remaining
    std::int64_t original = 0;
    std::uint64_t sequence = 0;  // time priority
};

struct Fill {
    std::uint64_t sequence = 0;
    MarketId market = 0;
    int bin = 0;
    OrderId taker_order = 0;
    OrderId maker_order = 0;
    AccountId buyer = 0;
    AccountId seller = 0;
    Side taker_side = Side::Buy;
    int price = 0;  // maker's resting price
    std::int64_t quantity = 0;
};

struct Account {
    AccountId id = 0;
    std::string name;
    Cents cash = 0;    // free cash
    Cents escrow = 0;  // held against open orders and short positions
    std::map<std::pair<MarketId, int>, std::int64_t> positions;
    std::map<std::pair<MarketId, int>, Cents> escrow_by_bin;
    std::optional<std::int64_t> position_cap;

    std::int64_t position(MarketId m, int bin) const;
};

struct SubmitResult {
    OrderId id = 0;
    std::vector<Fill> fills;
    std::int64_t resting = 0;  // quantity left on the book
};

struct Level {
    int price = 0;
    std::int64_t quantity = 0;
    std::size_t orders = 0;
};

struct BinView {
    std::vector<Level> bids;  // best (highest) first
    std::vector<Level> asks;  // best (lowest) first
    std::vector<Order> bid_orders;
    std::vector<Order> ask_orders;
};

struct BookView {
    MarketId market = 0;
    std::string name;
    std::vector<std::string> labels;
    bool settled = false;
    std::optional<int> winning_bin;
    std::vector<BinView> bins;
    std::vector<Fill> recent_fills;  // newest last
    std::uint64_t sequence = 0;

    std::size_t order_count() const;
};

struct SettleResult {
    MarketId market = 0;
    int winning_bin = 0;
    std::map<AccountId, Cents> payouts;
    std::vector<OrderId> cancelled;
};

struct MarketInfo {
    MarketId id = 0;
    std::string name;
    std::vector<std::string> labels;
    bool settled = false;
    std::optional<int> winning_bin;
};

/// Limit-order-book exchange for n-bin event markets. Prices are integer cents in [1,99],
/// matching is price-time priority at the resting order's price, and every account is held
/// to full margin: escrow always equals the worst-case liability of its open orders plus
/// short positions. Not thread-safe; callers serialize access.
class Engine {
public:
    AccountId open_account(std::string name, Cents cash, std::optional<std::int64_t> position_cap = std::nullopt);
    MarketId create_market(std::string name, std::vector<std::string> labels);

    SubmitResult submit(AccountId account, MarketId market, int bin, Side side, int price, std::int64_t quantity);
    Cents cancel(AccountId caller, OrderId order);
    Cents cancel_all(AccountId account, MarketId market);
    SettleResult settle(MarketId market, int winning_bin);

    BookView snapshot(MarketId market, std::size_t recent_fills = 20) const;

    const Account& account(AccountId id) const;
    std::optional<AccountId> find_account(std::string_view name) const;
    std::optional<MarketId> find_market(std::string_view name) const;
    MarketInfo market_info(MarketId id) const;
    std::vector<MarketId> markets() const;
    std::vector<AccountId> accounts() const;
    std::vector<Order> open_orders(AccountId account, std::optional<MarketId> market = std::nullopt) const;
    const std::vector<Fill>& fills(MarketId market) const;
    std::optional<Order> order(OrderId id) const;

    /// Sum of cash and escrow over all accounts.
    Cents total_money() const;
    /// Throws std::logic_error if any accounting invariant is broken.
    void check_invariants() const;

    /// Full ledger: accounts, positions, open orders and fills with sequence numbers.
    nlohmann::json ledger() const;

    std::uint64_t sequence() const { return sequence_; }

private:
    struct BinBook {
        std::map<int, std::deque<OrderId>, std::greater<>> bids;
        std::map<int, std::deque<OrderId>> asks;
    };

    struct Market {
        MarketId id = 0;
        std::string name;
        std::vector<std::string> labels;
        std::vector<BinBook> bins;
        bool settled = false;
        std::optional<SettleResult> settlement;
        std::vector<Fill> fills;
    };

    using BinKey = std::tuple<AccountId, MarketId, int>;

    Account& account_mut(AccountId id);
    Market& market_mut(MarketId id);
    const Market& market_ref(MarketId id) const;

    Cents required_escrow(const Account& a, MarketId m, int bin) const;
    void resync_escrow(Account& a, MarketId m, int bin);
    void remove_from_book(const Order& o);
    void execute(Market& mkt, Order& taker, Order& maker, std::vector<Fill>& out);

    std::map<AccountId, Account> accounts_;
    std::map<MarketId, Market> markets_;
    std::map<OrderId, Order> orders_;  // open orders only
    std::map<BinKey, std::set<OrderId>> orders_by_bin_;
    std::uint64_t sequence_ = 0;
    AccountId next_account_ = 1;
    MarketId next_market_ = 1;
    OrderId next_order_ = 1;
};

nlohmann::json to_json(const Fill& f);
nlohmann::json to_json(const Order& o);
nlohmann::json to_json(const BookView& b);
nlohmann::json to_json(const SettleResult& s);

}  // namespace hpm::market
