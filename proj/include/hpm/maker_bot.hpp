#pragma once

#include "hpm/decision.hpp"
#include "hpm/market_engine.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace hpm::bot {

using market::Cents;

/// Snap applied before flooring demand, so a value like 47.99999999999 counts as 48.
inline constexpr double kQuantitySnap = 1e-9;

struct BotState {
    market::AccountId account = 0;
    Eigen::VectorXd beliefs;           // p* over the n bins
    Cents cash = 0;                    // y, in cents
    std::vector<std::int64_t> holdings;  // z per bin
    decision::UtilitySpec utility{1.0};

    void validate() const;
    double cash_dollars() const { return static_cast<double>(cash) / 100.0; }
};

/// Throws std::invalid_argument unless p is a distribution over at least two bins.
void validate_beliefs(const Eigen::VectorXd& p);

struct Quote {
    int price = 0;  // cents
    std::int64_t quantity = 0;
};

struct BinQuotes {
    std::optional<Quote> bid;
    std::optional<Quote> ask;
};

struct QuoteSet {
    std::vector<BinQuotes> bins;

    bool operator==(const QuoteSet& o) const;
};

bool operator==(const Quote& a, const Quote& b);
bool operator==(const BinQuotes& a, const BinQuotes& b);

/// Utility-maximizing trade in bin i alone at price p (dollars per contract).
/// Positive = buy, negative = sell, clipped to worst-case solvency.
double demand_at_price(const BotState& state, int bin, double price);

/// Whole contracts the bot is willing to trade at a demand level.
inline std::int64_t snap_quantity(double demand)
{
    return static_cast<std::int64_t>(std::floor(std::abs(demand) + kQuantitySnap));
}

/// Highest cent with at least one contract of demand to buy, lowest cent with at least one
/// contract to sell. Pure function of (y, z, p*, rho).
QuoteSet quote_set(const BotState& state);

struct CancelAll {};
struct SubmitQuote {
    int bin = 0;
    market::Side side = market::Side::Buy;
    int price = 0;
    std::int64_t quantity = 0;
};
using Command = std::variant<CancelAll, SubmitQuote>;

/// Turns quotes into submissions the engine can fully escrow: quantities are trimmed
/// in bin order (bid, then ask) once free cash runs out.
std::vector<SubmitQuote> affordable_orders(const BotState& state, const QuoteSet& quotes);

nlohmann::json to_json(const QuoteSet& q);
nlohmann::json to_json(const BotState& s);

using AuditSink = std::function<void(const nlohmann::json&)>;

class MakerBot {
public:
    explicit MakerBot(BotState state, AuditSink audit = {});

    const BotState& state() const { return state_; }
    const QuoteSet& last_quotes() const { return last_quotes_; }

    /// Cancel-all followed by the fresh quote submissions.
    std::vector<Command> requote();
    /// Applies a fill to the portfolio mirror and requotes. Fills not involving the bot or
    /// with zero quantity produce no commands.
    std::vector<Command> on_fill(const market::Fill& fill);
    /// Portfolio-mirror half of on_fill. Returns false if the fill is not the bot's.
    bool apply_fill(const market::Fill& fill);
    std::vector<Command> on_beliefs(const Eigen::VectorXd& beliefs);
    /// Belief half of on_beliefs.
    void set_beliefs(const Eigen::VectorXd& beliefs);

    /// Compares the mirror to the engine ledger; the bot's orders must already be
    /// cancelled, so cash + escrow is its full cash. Returns true if a resync was needed.
    bool sync_from(const market::Engine& engine, market::MarketId market);

private:
    BotState state_;
    AuditSink audit_;
    QuoteSet last_quotes_;
};

}  // namespace hpm::bot
