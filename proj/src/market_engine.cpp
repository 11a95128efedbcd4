#include "hpm/market_engine.hpp"

#include <algorithm>

namespace hpm::market {

std::string to_string(Side s) { return s == Side::Buy ? "BUY" : "SELL"; }

Side side_from_string(std::string_view s)
{
    if (s == "BUY" || s == "buy") return Side::Buy;
    if (s == "SELL" || s == "sell") return Side::Sell;
    throw EngineError(ErrorCode::InvalidArgument, "side must be BUY or SELL");
}

std::int64_t Account::position(MarketId m, int bin) const
{
    auto it = positions.find({m, bin});
    return it == positions.end() ? 0 : it->second;
}

std::size_t BookView::order_count() const
{
    std::size_t n = 0;
    for (const auto& b : bins) n += b.bid_orders.size() + b.ask_orders.size();
    return n;
}

AccountId Engine::open_account(std::string name, Cents cash, std::optional<std::int64_t> position_cap)
{
    if (cash < 0) throw EngineError(ErrorCode::InvalidArgument, "initial cash must be non-negative");
    if (name.empty()) throw EngineError(ErrorCode::InvalidArgument, "account name must not be empty");
    if (find_account(name)) throw EngineError(ErrorCode::DuplicateName, "account name already taken: " + name);
    if (position_cap && *position_cap < 1) throw EngineError(ErrorCode::InvalidArgument, "position cap must be >= 1");
    Account a;
    a.id = next_account_++;
    a.name = std::move(name);
    a.cash = cash;
    a.position_cap = position_cap;
    auto id = a.id;
    accounts_.emplace(id, std::move(a));
    return id;
}

MarketId Engine::create_market(std::string name, std::vector<std::string> labels)
{
    const auto n = static_cast<int>(labels.size());
    if (n < kMinBins || n > kMaxBins)
        throw EngineError(ErrorCode::InvalidArgument, "a market needs between 2 and 64 bins");
    if (name.empty()) throw EngineError(ErrorCode::InvalidArgument, "market name must not be empty");
    if (find_market(name)) throw EngineError(ErrorCode::DuplicateName, "market name already taken: " + name);
    Market m;
    m.id = next_market_++;
    m.name = std::move(name);
    m.labels = std::move(labels);
    m.bins.resize(static_cast<std::size_t>(n));
    auto id = m.id;
    markets_.emplace(id, std::move(m));
    return id;
}

Account& Engine::account_mut(AccountId id)
{
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw EngineError(ErrorCode::UnknownAccount, "unknown account " + std::to_string(id));
    return it->second;
}

const Account& Engine::account(AccountId id) const
{
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw EngineError(ErrorCode::UnknownAccount, "unknown account " + std::to_string(id));
    return it->second;
}

Engine::Market& Engine::market_mut(MarketId id)
{
    auto it = markets_.find(id);
    if (it == markets_.end()) throw EngineError(ErrorCode::UnknownMarket, "unknown market " + std::to_string(id));
    return it->second;
}

const Engine::Market& Engine::market_ref(MarketId id) const
{
    auto it = markets_.find(id);
    if (it == markets_.end()) throw EngineError(ErrorCode::UnknownMarket, "unknown market " + std::to_string(id));
    return it->second;
}

std::optional<AccountId> Engine::find_account(std::string_view name) const
{
    for (const auto& [id, a] : accounts_)
        if (a.name == name) return id;
    return std::nullopt;
}

std::optional<MarketId> Engine::find_market(std::string_view name) const
{
    for (const auto& [id, m] : markets_)
        if (m.name == name) return id;
    return std::nullopt;
}

MarketInfo Engine::market_info(MarketId id) const
{
    const auto& m = market_ref(id);
    return {m.id, m.name, m.labels, m.settled,
            m.settlement ? std::optional<int>(m.settlement->winning_bin) : std::nullopt};
}

std::vector<MarketId> Engine::markets() const
{
    std::vector<MarketId> out;
    for (const auto& [id, m] : markets_) out.push_back(id);
    return out;
}

std::vector<AccountId> Engine::accounts() const
{
    std::vector<AccountId> out;
    for (const auto& [id, a] : accounts_) out.push_back(id);
    return out;
}

std::optional<Order> Engine::order(OrderId id) const
{
    auto it = orders_.find(id);
    if (it == orders_.end()) return std::nullopt;
    return it->second;
}

std::vector<Order> Engine::open_orders(AccountId account, std::optional<MarketId> market) const
{
    std::vector<Order> out;
    for (const auto& [id, o] : orders_)
        if (o.account == account && (!market || o.market == *market)) out.push_back(o);
    return out;
}

const std::vector<Fill>& Engine::fills(MarketId market) const { return market_ref(market).fills; }

// Worst-case liability of one (account, market, bin): buys escrow their full cost, sells
// beyond the held long position escrow (100 - price) each, allocated to the lowest-priced
// sells first, and every short contract is collateralized at 100.
Cents Engine::required_escrow(const Account& a, MarketId m, int bin) const
{
    const std::int64_t z = a.position(m, bin);
    Cents need = kContractPayout * std::max<std::int64_t>(-z, 0);
    auto it = orders_by_bin_.find({a.id, m, bin});
    if (it == orders_by_bin_.end()) return need;
    std::vector<std::pair<int, std::int64_t>> sells;
    std::int64_t sell_qty = 0;
    for (OrderId id : it->second) {
        const auto& o = orders_.at(id);
        if (o.side == Side::Buy) {
            need += static_cast<Cents>(o.price) * o.quantity;
        } else {
            sells.emplace_back(o.price, o.quantity);
            sell_qty += o.quantity;
        }
    }
    std::int64_t uncovered = std::max<std::int64_t>(sell_qty - std::max<std::int64_t>(z, 0), 0);
    std::sort(sells.begin(), sells.end());
    for (const auto& [price, qty] : sells) {
        if (uncovered == 0) break;
        const std::int64_t take = std::min(qty, uncovered);
        need += static_cast<Cents>(kContractPayout - price) * take;
        uncovered -= take;
    }
    return need;
}

void Engine::resync_escrow(Account& a, MarketId m, int bin)
{
    const Cents need = required_escrow(a, m, bin);
    Cents& held = a.escrow_by_bin[{m, bin}];
    const Cents delta = need - held;
    a.cash -= delta;
    a.escrow += delta;
    held = need;
    if (held == 0) a.escrow_by_bin.erase({m, bin});
    if (a.cash < 0) throw std::logic_error("escrow resync drove cash negative for account " + a.name);
}

void Engine::remove_from_book(const Order& o)
{
    auto& book = market_mut(o.market).bins[static_cast<std::size_t>(o.bin)];
    auto erase_from = [&](auto& side) {
        auto lvl = side.find(o.price);
        if (lvl == side.end()) return;
        auto& q = lvl->second;
        q.erase(std::remove(q.begin(), q.end(), o.id), q.end());
        if (q.empty()) side.erase(lvl);
    };
    if (o.side == Side::Buy)
        erase_from(book.bids);
    else
        erase_from(book.asks);
    auto key = BinKey{o.account, o.market, o.bin};
    auto it = orders_by_bin_.find(key);
    if (it != orders_by_bin_.end()) {
        it->second.erase(o.id);
        if (it->second.empty()) orders_by_bin_.erase(it);
    }
}

void Engine::execute(Market& mkt, Order& taker, Order& maker, std::vector<Fill>& out)
{
    const std::int64_t qty = std::min(taker.quantity, maker.quantity);
    const int price = maker.price;
    Order& buy = taker.side == Side::Buy ? taker : maker;
    Order& sell = taker.side == Side::Buy ? maker : taker;
    Account& buyer = account_mut(buy.account);
    Account& seller = account_mut(sell.account);

    const Cents pay = static_cast<Cents>(price) * qty;
    buyer.cash -= pay;
    seller.cash += pay;
    buyer.positions[{mkt.id, buy.bin}] += qty;
    seller.positions[{mkt.id, sell.bin}] -= qty;
    for (Account* a : {&buyer, &seller}) {
        auto key = std::pair{mkt.id, buy.bin};
        if (a->positions[key] == 0) a->positions.erase(key);
    }
    taker.quantity -= qty;
    maker.quantity -= qty;

    Fill f;
    f.sequence = ++sequence_;
    f.market = mkt.id;
    f.bin = taker.bin;
    f.taker_order = taker.id;
    f.maker_order = maker.id;
    f.buyer = buyer.id;
    f.seller = seller.id;
    f.taker_side = taker.side;
    f.price = price;
    f.quantity = qty;
    mkt.fills.push_back(f);
    out.push_back(f);

    if (maker.quantity == 0) {
        const Order done = maker;
        remove_from_book(done);
        orders_.erase(done.id);
    }
    resync_escrow(buyer, mkt.id, taker.bin);
    if (seller.id != buyer.id) resync_escrow(seller, mkt.id, taker.bin);
}

SubmitResult Engine::submit(AccountId account_id, MarketId market_id, int bin, Side side, int price,
                            std::int64_t quantity)
{
    Account& acct = account_mut(account_id);
    Market& mkt = market_mut(market_id);
    if (mkt.settled) throw EngineError(ErrorCode::MarketClosed, "market " + mkt.name + " is settled");
    if (bin < 0 || bin >= static_cast<int>(mkt.bins.size()))
        throw EngineError(ErrorCode::UnknownBin, "unknown bin " + std::to_string(bin));
    if (price < kMinPrice || price > kMaxPrice)
        throw EngineError(ErrorCode::InvalidPrice, "price must be within [1,99] cents");
    if (quantity < 1) throw EngineError(ErrorCode::InvalidQuantity, "quantity must be at least 1");

    const BinKey key{account_id, market_id, bin};
    if (acct.position_cap) {
        std::int64_t buys = 0, sells = 0;
        if (auto it = orders_by_bin_.find(key); it != orders_by_bin_.end())
            for (OrderId id : it->second) (orders_.at(id).side == Side::Buy ? buys : sells) += orders_.at(id).quantity;
        const std::int64_t z = acct.position(market_id, bin);
        const std::int64_t exposure = side == Side::Buy ? z + buys + quantity : -z + sells + quantity;
        if (exposure > *acct.position_cap)
            throw EngineError(ErrorCode::PositionLimit, "order would exceed the position cap");
    }

    Order o;
    o.id = next_order_++;
    o.account = account_id;
    o.market = market_id;
    o.bin = bin;
    o.side = side;
    o.price = price;
    o.quantity = quantity;
    o.original = quantity;
    o.sequence = ++sequence_;

    orders_.emplace(o.id, o);
    orders_by_bin_[key].insert(o.id);
    const Cents held = [&] {
        auto it = acct.escrow_by_bin.find({market_id, bin});
        return it == acct.escrow_by_bin.end() ? Cents{0} : it->second;
    }();
    const Cents need = required_escrow(acct, market_id, bin);
    if (need - held > acct.cash) {
        orders_.erase(o.id);
        auto& ids = orders_by_bin_[key];
        ids.erase(o.id);
        if (ids.empty()) orders_by_bin_.erase(key);
        --next_order_;
        --sequence_;
        throw EngineError(ErrorCode::InsufficientMargin, "insufficient margin: order needs " +
                                                             std::to_string(need - held) + " cents, " +
                                                             std::to_string(acct.cash) + " available");
    }
    resync_escrow(acct, market_id, bin);

    SubmitResult result;
    result.id = o.id;
    auto& book = mkt.bins[static_cast<std::size_t>(bin)];
    Order& taker = orders_.at(o.id);
    auto match = [&](auto& opposite, auto crosses) {
        while (taker.quantity > 0 && !opposite.empty() && crosses(opposite.begin()->first)) {
            OrderId maker_id = opposite.begin()->second.front();
            execute(mkt, taker, orders_.at(maker_id), result.fills);
        }
    };
    if (side == Side::Buy)
        match(book.asks, [&](int ask) { return ask <= price; });
    else
        match(book.bids, [&](int bid) { return bid >= price; });

    result.resting = taker.quantity;
    if (taker.quantity > 0) {
        if (side == Side::Buy)
            book.bids[price].push_back(o.id);
        else
            book.asks[price].push_back(o.id);
    } else {
        const Order done = taker;
        remove_from_book(done);
        orders_.erase(done.id);
        resync_escrow(acct, market_id, bin);
    }
    return result;
}

Cents Engine::cancel(AccountId caller, OrderId order_id)
{
    auto it = orders_.find(order_id);
    if (it == orders_.end())
        throw EngineError(ErrorCode::UnknownOrder, "order " + std::to_string(order_id) + " is not open");
    if (it->second.account != caller)
        throw EngineError(ErrorCode::NotOwner, "order " + std::to_string(order_id) + " belongs to another account");
    const Order o = it->second;
    Account& acct = account_mut(o.account);
    const Cents before = acct.escrow;
    remove_from_book(o);
    orders_.erase(o.id);
    resync_escrow(acct, o.market, o.bin);
    ++sequence_;
    return before - acct.escrow;
}

Cents Engine::cancel_all(AccountId account_id, MarketId market_id)
{
    market_ref(market_id);
    Cents released = 0;
    for (const auto& o : open_orders(account_id, market_id)) released += cancel(account_id, o.id);
    return released;
}

SettleResult Engine::settle(MarketId market_id, int winning_bin)
{
    Market& mkt = market_mut(market_id);
    if (mkt.settled) throw EngineError(ErrorCode::AlreadySettled, "market " + mkt.name + " is already settled");
    if (winning_bin < 0 || winning_bin >= static_cast<int>(mkt.bins.size()))
        throw EngineError(ErrorCode::UnknownBin, "unknown bin " + std::to_string(winning_bin));

    SettleResult result;
    result.market = market_id;
    result.winning_bin = winning_bin;
    std::vector<Order> open;
    for (const auto& [id, o] : orders_)
        if (o.market == market_id) open.push_back(o);
    for (const auto& o : open) {
        cancel(o.account, o.id);
        result.cancelled.push_back(o.id);
    }

    for (auto& [id, acct] : accounts_) {
        Cents payout = 0;
        bool involved = false;
        for (int bin = 0; bin < static_cast<int>(mkt.bins.size()); ++bin) {
            auto pos = acct.positions.find({market_id, bin});
            if (pos == acct.positions.end()) continue;
            involved = true;
            if (bin == winning_bin) payout += kContractPayout * pos->second;
            acct.positions.erase(pos);
            resync_escrow(acct, market_id, bin);
        }
        if (!involved) continue;
        acct.cash += payout;
        if (acct.cash < 0) throw std::logic_error("settlement left account " + acct.name + " with negative cash");
        result.payouts[id] = payout;
    }
    mkt.settled = true;
    mkt.settlement = result;
    ++sequence_;
    return result;
}

BookView Engine::snapshot(MarketId market_id, std::size_t recent_fills) const
{
    const Market& mkt = market_ref(market_id);
    BookView view;
    view.market = mkt.id;
    view.name = mkt.name;
    view.labels = mkt.labels;
    view.settled = mkt.settled;
    if (mkt.settlement) view.winning_bin = mkt.settlement->winning_bin;
    view.sequence = sequence_;
    for (const auto& bin : mkt.bins) {
        BinView bv;
        auto collect = [&](const auto& side, std::vector<Level>& levels, std::vector<Order>& orders) {
            for (const auto& [price, ids] : side) {
                Level lvl{price, 0, ids.size()};
                for (OrderId id : ids) {
                    const auto& o = orders_.at(id);
                    lvl.quantity += o.quantity;
                    orders.push_back(o);
                }
                levels.push_back(lvl);
            }
        };
        collect(bin.bids, bv.bids, bv.bid_orders);
        collect(bin.asks, bv.asks, bv.ask_orders);
        view.bins.push_back(std::move(bv));
    }
    const std::size_t start = mkt.fills.size() > recent_fills ? mkt.fills.size() - recent_fills : 0;
    view.recent_fills.assign(mkt.fills.begin() + static_cast<std::ptrdiff_t>(start), mkt.fills.end());
    return view;
}

Cents Engine::total_money() const
{
    Cents total = 0;
    for (const auto& [id, a] : accounts_) total += a.cash + a.escrow;
    return total;
}

void Engine::check_invariants() const
{
    for (const auto& [id, a] : accounts_) {
        if (a.cash < 0) throw std::logic_error("negative cash for account " + a.name);
        Cents sum = 0;
        for (const auto& [key, held] : a.escrow_by_bin) {
            if (held != required_escrow(a, key.first, key.second))
                throw std::logic_error("escrow mismatch for account " + a.name);
            sum += held;
        }
        for (const auto& [key, z] : a.positions)
            if (required_escrow(a, key.first, key.second) != 0 && !a.escrow_by_bin.count(key))
                throw std::logic_error("unescrowed position for account " + a.name);
        if (sum != a.escrow) throw std::logic_error("escrow total mismatch for account " + a.name);
    }
    for (const auto& [mid, mkt] : markets_) {
        for (int bin = 0; bin < static_cast<int>(mkt.bins.size()); ++bin) {
            std::int64_t net = 0;
            for (const auto& [aid, a] : accounts_) net += a.position(mid, bin);
            if (net != 0) throw std::logic_error("positions do not net to zero in market " + mkt.name);
            const auto& b = mkt.bins[static_cast<std::size_t>(bin)];
            if (!b.bids.empty() && !b.asks.empty() && b.bids.begin()->first >= b.asks.begin()->first)
                throw std::logic_error("crossed book in market " + mkt.name);
        }
    }
}

nlohmann::json to_json(const Fill& f)
{
    return {{"sequence", f.sequence},       {"market", f.market},   {"bin", f.bin},
            {"taker_order", f.taker_order}, {"maker_order", f.maker_order},
            {"buyer", f.buyer},             {"seller", f.seller},   {"taker_side", to_string(f.taker_side)},
            {"price_cents", f.price},       {"qty", f.quantity}};
}

nlohmann::json to_json(const Order& o)
{
    return {{"id", o.id},         {"account", o.account},        {"market", o.market},
            {"bin", o.bin},       {"side", to_string(o.side)},   {"price_cents", o.price},
            {"qty", o.quantity},  {"original_qty", o.original},  {"sequence", o.sequence}};
}

nlohmann::json to_json(const BookView& b)
{
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t i = 0; i < b.bins.size(); ++i) {
        const auto& bv = b.bins[i];
        auto levels = [](const std::vector<Level>& ls) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& l : ls) arr.push_back({{"price_cents", l.price}, {"qty", l.quantity}, {"orders", l.orders}});
            return arr;
        };
        auto orders = [](const std::vector<Order>& os) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& o : os) arr.push_back(to_json(o));
            return arr;
        };
        bins.push_back({{"bin", i},
                        {"label", b.labels[i]},
                        {"bids", levels(bv.bids)},
                        {"asks", levels(bv.asks)},
                        {"bid_orders", orders(bv.bid_orders)},
                        {"ask_orders", orders(bv.ask_orders)}});
    }
    nlohmann::json fills = nlohmann::json::array();
    for (const auto& f : b.recent_fills) fills.push_back(to_json(f));
    nlohmann::json out{{"market", b.market}, {"name", b.name},         {"settled", b.settled},
                       {"bins", bins},       {"recent_fills", fills},  {"sequence", b.sequence}};
    out["winning_bin"] = b.winning_bin ? nlohmann::json(*b.winning_bin) : nlohmann::json(nullptr);
    return out;
}

nlohmann::json to_json(const SettleResult& s)
{
    nlohmann::json payouts = nlohmann::json::object();
    for (const auto& [id, c] : s.payouts) payouts[std::to_string(id)] = c;
    return {{"market", s.market}, {"winning_bin", s.winning_bin}, {"payouts", payouts}, {"cancelled", s.cancelled}};
}

nlohmann::json Engine::ledger() const
{
    nlohmann::json accounts = nlohmann::json::array();
    for (const auto& [id, a] : accounts_) {
        nlohmann::json positions = nlohmann::json::array();
        for (const auto& [key, z] : a.positions) positions.push_back({{"market", key.first}, {"bin", key.second}, {"qty", z}});
        nlohmann::json acct{{"id", id},           {"name", a.name},   {"cash_cents", a.cash},
                            {"escrow_cents", a.escrow}, {"positions", positions}};
        acct["position_cap"] = a.position_cap ? nlohmann::json(*a.position_cap) : nlohmann::json(nullptr);
        accounts.push_back(std::move(acct));
    }
    nlohmann::json orders = nlohmann::json::array();
    for (const auto& [id, o] : orders_) orders.push_back(to_json(o));
    nlohmann::json markets = nlohmann::json::array();
    for (const auto& [id, m] : markets_) {
        nlohmann::json fills = nlohmann::json::array();
        for (const auto& f : m.fills) fills.push_back(to_json(f));
        nlohmann::json mj{{"id", id}, {"name", m.name}, {"labels", m.labels}, {"settled", m.settled}, {"fills", fills}};
        mj["settlement"] = m.settlement ? to_json(*m.settlement) : nlohmann::json(nullptr);
        markets.push_back(std::move(mj));
    }
    return {{"sequence", sequence_}, {"accounts", accounts}, {"open_orders", orders}, {"markets", markets}};
}

}  // namespace hpm::market
