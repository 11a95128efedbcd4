#include "hpm/maker_bot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpm::bot {

void validate_beliefs(const Eigen::VectorXd& p)
{
    if (p.size() < 2) throw std::invalid_argument("beliefs need at least two bins");
    if (!p.allFinite() || (p.array() < 0.0).any() || (p.array() > 1.0).any())
        throw std::invalid_argument("beliefs must lie in [0,1]");
    if (std::abs(p.sum() - 1.0) > decision::kBeliefTolerance) throw std::invalid_argument("beliefs must sum to 1");
}

void BotState::validate() const
{
    validate_beliefs(beliefs);
    if (static_cast<Eigen::Index>(holdings.size()) != beliefs.size())
        throw std::invalid_argument("holdings and beliefs differ in length");
    if (cash < 0) throw std::invalid_argument("bot cash must be non-negative");
    utility.validate();
}

bool operator==(const Quote& a, const Quote& b) { return a.price == b.price && a.quantity == b.quantity; }
bool operator==(const BinQuotes& a, const BinQuotes& b) { return a.bid == b.bid && a.ask == b.ask; }
bool QuoteSet::operator==(const QuoteSet& o) const { return bins == o.bins; }

double demand_at_price(const BotState& state, int bin, double price)
{
    const Eigen::Index n = state.beliefs.size();
    if (bin < 0 || bin >= n) throw std::out_of_range("bin out of range");
    if (!(price > 0.0 && price < 1.0)) throw decision::DomainError("price must lie strictly inside (0,1)");

    decision::Portfolio<double> portfolio{state.cash_dollars(), Eigen::MatrixXd::Zero(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) portfolio.holdings(i, 0) = static_cast<double>(state.holdings[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, 1);
    q(bin, 0) = price;
    decision::MatrixXb mask = decision::MatrixXb::Constant(n, 1, false);
    mask(bin, 0) = true;
    const decision::PriceBoard board(q, mask);
    const decision::Beliefs beliefs{decision::MarginalBeliefs{state.beliefs}};
    return decision::optimal_trades(portfolio, board, beliefs, state.utility).plan(bin, 0);
}

namespace {

// Demand is non-increasing in price, so each side's qualifying cents form a contiguous
// run; walk from the belief toward the boundary.
std::optional<Quote> find_quote(const BotState& state, int bin, market::Side side)
{
    const double sign = side == market::Side::Buy ? 1.0 : -1.0;
    auto size_at = [&](int cents) -> std::int64_t {
        const double d = sign * demand_at_price(state, bin, cents / 100.0);
        return d > 0.0 ? snap_quantity(d) : 0;
    };
    const int start = std::clamp(static_cast<int>(std::lround(100.0 * state.beliefs(bin))), market::kMinPrice,
                                 market::kMaxPrice);
    // Buying: qualifying prices lie at and below the bid. Selling: at and above the ask.
    const int toward_edge = side == market::Side::Buy ? -1 : 1;
    std::int64_t qty = size_at(start);
    int c = start;
    if (qty >= 1) {
        // Move away from the edge while still qualifying.
        while (c - toward_edge >= market::kMinPrice && c - toward_edge <= market::kMaxPrice) {
            const std::int64_t next = size_at(c - toward_edge);
            if (next < 1) break;
            c -= toward_edge;
            qty = next;
        }
        return Quote{c, qty};
    }
    while (true) {
        c += toward_edge;
        if (c < market::kMinPrice || c > market::kMaxPrice) return std::nullopt;
        qty = size_at(c);
        if (qty >= 1) return Quote{c, qty};
    }
}

}  // namespace

QuoteSet quote_set(const BotState& state)
{
    state.validate();
    QuoteSet out;
    for (int i = 0; i < static_cast<int>(state.beliefs.size()); ++i)
        out.bins.push_back({find_quote(state, i, market::Side::Buy), find_quote(state, i, market::Side::Sell)});
    for (const auto& b : out.bins)
        if (b.bid && b.ask && b.bid->price >= b.ask->price) throw std::logic_error("quote set crosses itself");
    return out;
}

std::vector<SubmitQuote> affordable_orders(const BotState& state, const QuoteSet& quotes)
{
    Cents budget = state.cash;
    for (auto z : state.holdings) budget -= market::kContractPayout * std::max<std::int64_t>(-z, 0);
    if (budget < 0) throw std::logic_error("bot short positions exceed its cash");
    std::vector<SubmitQuote> out;
    for (std::size_t i = 0; i < quotes.bins.size(); ++i) {
        const auto& b = quotes.bins[i];
        if (b.bid) {
            const std::int64_t qty = std::min<std::int64_t>(b.bid->quantity, budget / b.bid->price);
            if (qty >= 1) {
                budget -= qty * b.bid->price;
                out.push_back({static_cast<int>(i), market::Side::Buy, b.bid->price, qty});
            }
        }
        if (b.ask) {
            const std::int64_t covered = std::min<std::int64_t>(b.ask->quantity, std::max<std::int64_t>(state.holdings[i], 0));
            const Cents unit = market::kContractPayout - b.ask->price;
            const std::int64_t naked = std::min<std::int64_t>(b.ask->quantity - covered, budget / unit);
            if (covered + naked >= 1) {
                budget -= naked * unit;
                out.push_back({static_cast<int>(i), market::Side::Sell, b.ask->price, covered + naked});
            }
        }
    }
    return out;
}

nlohmann::json to_json(const QuoteSet& q)
{
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t i = 0; i < q.bins.size(); ++i) {
        auto side = [](const std::optional<Quote>& s) {
            return s ? nlohmann::json{{"price_cents", s->price}, {"qty", s->quantity}} : nlohmann::json(nullptr);
        };
        bins.push_back({{"bin", i}, {"bid", side(q.bins[i].bid)}, {"ask", side(q.bins[i].ask)}});
    }
    return bins;
}

nlohmann::json to_json(const BotState& s)
{
    std::vector<double> p(s.beliefs.data(), s.beliefs.data() + s.beliefs.size());
    return {{"account", s.account}, {"beliefs", p}, {"cash_cents", s.cash}, {"holdings", s.holdings}, {"rho", s.utility.rho}};
}

MakerBot::MakerBot(BotState state, AuditSink audit) : state_(std::move(state)), audit_(std::move(audit))
{
    state_.validate();
}

std::vector<Command> MakerBot::requote()
{
    last_quotes_ = quote_set(state_);
    const auto orders = affordable_orders(state_, last_quotes_);
    if (audit_) {
        nlohmann::json submitted = nlohmann::json::array();
        for (const auto& o : orders)
            submitted.push_back({{"bin", o.bin}, {"side", market::to_string(o.side)}, {"price_cents", o.price}, {"qty", o.quantity}});
        audit_({{"inputs", to_json(state_)}, {"quotes", to_json(last_quotes_)}, {"orders", submitted}});
    }
    std::vector<Command> out{CancelAll{}};
    for (const auto& o : orders) out.emplace_back(o);
    return out;
}

bool MakerBot::apply_fill(const market::Fill& fill)
{
    if (fill.quantity == 0) return false;
    const bool buyer = fill.buyer == state_.account;
    const bool seller = fill.seller == state_.account;
    if (!buyer && !seller) return false;
    if (fill.bin < 0 || fill.bin >= static_cast<int>(state_.holdings.size())) throw std::out_of_range("fill bin out of range");
    const Cents amount = static_cast<Cents>(fill.price) * fill.quantity;
    auto& z = state_.holdings[static_cast<std::size_t>(fill.bin)];
    if (buyer) {
        z += fill.quantity;
        state_.cash -= amount;
    }
    if (seller) {
        z -= fill.quantity;
        state_.cash += amount;
    }
    return true;
}

std::vector<Command> MakerBot::on_fill(const market::Fill& fill)
{
    if (!apply_fill(fill)) return {};
    return requote();
}

void MakerBot::set_beliefs(const Eigen::VectorXd& beliefs)
{
    validate_beliefs(beliefs);
    if (beliefs.size() != state_.beliefs.size()) throw std::invalid_argument("belief vector has the wrong number of bins");
    state_.beliefs = beliefs;
}

std::vector<Command> MakerBot::on_beliefs(const Eigen::VectorXd& beliefs)
{
    set_beliefs(beliefs);
    return requote();
}

bool MakerBot::sync_from(const market::Engine& engine, market::MarketId market)
{
    const auto& acct = engine.account(state_.account);
    const Cents cash = acct.cash + acct.escrow;
    std::vector<std::int64_t> holdings(state_.holdings.size());
    for (std::size_t i = 0; i < holdings.size(); ++i) holdings[i] = acct.position(market, static_cast<int>(i));
    if (cash == state_.cash && holdings == state_.holdings) return false;
    state_.cash = cash;
    state_.holdings = std::move(holdings);
    return true;
}

}  // namespace hpm::bot
