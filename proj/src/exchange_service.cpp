#include "hpm/exchange_service.hpp"

#include <random>
#include <sstream>

namespace hpm::service {

using nlohmann::json;

json to_json(const Event& e) { return {{"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}}; }

std::string generate_token()
{
    static thread_local std::random_device rd;
    std::ostringstream out;
    out << std::hex;
    for (int i = 0; i < 4; ++i) {
        std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        out.width(16);
        out.fill('0');
        out << v;
    }
    return out.str();
}

void translate_exception(std::exception_ptr e)
{
    try {
        std::rethrow_exception(e);
    } catch (const ServiceError&) {
        throw;
    } catch (const market::EngineError& err) {
        using market::ErrorCode;
        switch (err.code()) {
        case ErrorCode::InsufficientMargin: throw ServiceError(422, "insufficient_margin", err.what());
        case ErrorCode::PositionLimit: throw ServiceError(422, "position_limit", err.what());
        case ErrorCode::UnknownMarket: throw ServiceError(404, "unknown_market", err.what());
        case ErrorCode::UnknownAccount: throw ServiceError(404, "unknown_account", err.what());
        case ErrorCode::UnknownOrder: throw ServiceError(404, "unknown_order", err.what());
        case ErrorCode::UnknownBin: throw ServiceError(400, "unknown_bin", err.what());
        case ErrorCode::InvalidPrice: throw ServiceError(400, "invalid_price", err.what());
        case ErrorCode::InvalidQuantity: throw ServiceError(400, "invalid_quantity", err.what());
        case ErrorCode::NotOwner: throw ServiceError(403, "not_owner", err.what());
        case ErrorCode::MarketClosed: throw ServiceError(409, "market_closed", err.what());
        case ErrorCode::AlreadySettled: throw ServiceError(409, "already_settled", err.what());
        case ErrorCode::DuplicateName: throw ServiceError(409, "duplicate_name", err.what());
        case ErrorCode::InvalidArgument: throw ServiceError(400, "invalid_argument", err.what());
        }
        throw ServiceError(400, "invalid_argument", err.what());
    } catch (const json::exception& err) {
        throw ServiceError(400, "malformed_request", err.what());
    } catch (const std::invalid_argument& err) {
        throw ServiceError(400, "invalid_argument", err.what());
    } catch (const std::out_of_range& err) {
        throw ServiceError(400, "invalid_argument", err.what());
    } catch (const std::domain_error& err) {
        throw ServiceError(400, "invalid_argument", err.what());
    }
}

ExchangeService::ExchangeService(ServiceConfig config) : config_(std::move(config))
{
    if (config_.admin_token.empty()) throw std::invalid_argument("an admin token is required");
    if (config_.audit_log) {
        audit_out_.open(*config_.audit_log, std::ios::app);
        if (!audit_out_) throw std::runtime_error("cannot open audit log " + config_.audit_log->string());
    }
    if (config_.journal) {
        if (std::filesystem::exists(*config_.journal)) replay(*config_.journal);
        journal_out_.open(*config_.journal, std::ios::app);
        if (!journal_out_) throw std::runtime_error("cannot open journal " + config_.journal->string());
    }
}

ExchangeService::~ExchangeService()
{
    shutdown();
    if (journal_out_.is_open()) journal_out_.flush();
}

void ExchangeService::shutdown()
{
    {
        std::lock_guard lock(mutex_);
        shut_down_ = true;
    }
    events_cv_.notify_all();
}

bool ExchangeService::is_shut_down() const
{
    std::lock_guard lock(mutex_);
    return shut_down_;
}

std::size_t ExchangeService::journal_entries() const
{
    std::lock_guard lock(mutex_);
    return journal_entries_;
}

void ExchangeService::require_admin(const std::string& token) const
{
    if (token.empty()) throw ServiceError(401, "unauthenticated", "admin credential required");
    if (token != config_.admin_token) throw ServiceError(403, "forbidden", "admin credential required");
}

AccountId ExchangeService::authenticate(const std::string& token) const
{
    if (token.empty()) throw ServiceError(401, "unauthenticated", "missing session token");
    auto it = tokens_.find(token);
    if (it == tokens_.end()) throw ServiceError(401, "unauthenticated", "unknown session token");
    return it->second;
}

AccountId ExchangeService::account_for_token(const std::string& token) const
{
    std::lock_guard lock(mutex_);
    return authenticate(token);
}

std::optional<AccountId> ExchangeService::bot_account(MarketId market) const
{
    std::lock_guard lock(mutex_);
    const auto& st = state_of(market);
    if (!st.bot) return std::nullopt;
    return st.bot->state().account;
}

ExchangeService::MarketState& ExchangeService::state_of(MarketId market)
{
    auto it = markets_.find(market);
    if (it == markets_.end()) throw ServiceError(404, "unknown_market", "unknown market " + std::to_string(market));
    return it->second;
}

const ExchangeService::MarketState& ExchangeService::state_of(MarketId market) const
{
    auto it = markets_.find(market);
    if (it == markets_.end()) throw ServiceError(404, "unknown_market", "unknown market " + std::to_string(market));
    return it->second;
}

void ExchangeService::emit(MarketId market, std::string kind, json payload)
{
    auto& evs = state_of(market).events;
    evs.push_back({static_cast<std::uint64_t>(evs.size()), std::move(kind), std::move(payload)});
    events_cv_.notify_all();
}

void ExchangeService::emit_book(MarketId market)
{
    emit(market, "BOOK", market::to_json(engine_.snapshot(market, config_.recent_fills)));
}

void ExchangeService::emit_trades(MarketId market, const std::vector<market::Fill>& fills)
{
    for (const auto& f : fills) emit(market, "TRADE", market::to_json(f));
}

void ExchangeService::journal(const json& entry)
{
    ++journal_entries_;
    if (replaying_ || !journal_out_.is_open()) return;
    journal_out_ << entry.dump() << '\n';
    journal_out_.flush();
    if (!journal_out_) throw std::runtime_error("journal write failed");
}

// Cancels the bot's orders and posts fresh quotes. Fresh quotes can cross resting human
// orders; each such fill changes the bot's portfolio, so the cycle repeats until a round
// of quotes rests without trading.
void ExchangeService::run_requote(MarketId market)
{
    auto& st = state_of(market);
    if (!st.bot) return;
    constexpr int kMaxRounds = 100;
    for (int round = 0; round < kMaxRounds; ++round) {
        const auto bot_account = st.bot->state().account;
        engine_.cancel_all(bot_account, market);
        st.bot->sync_from(engine_, market);
        auto commands = st.bot->requote();
        const auto& s = st.bot->state();
        json quotes{{"account", s.account},
                    {"beliefs", std::vector<double>(s.beliefs.data(), s.beliefs.data() + s.beliefs.size())},
                    {"cash_cents", s.cash},
                    {"holdings", s.holdings},
                    {"quotes", bot::to_json(st.bot->last_quotes())}};
        bool traded = false;
        for (const auto& cmd : commands) {
            const auto* sub = std::get_if<bot::SubmitQuote>(&cmd);
            if (!sub) continue;
            market::SubmitResult res;
            try {
                res = engine_.submit(bot_account, market, sub->bin, sub->side, sub->price, sub->quantity);
            } catch (const market::EngineError& e) {
                // Earlier quotes in this round may have traded and moved the bot's cash.
                if (e.code() == market::ErrorCode::InsufficientMargin) continue;
                throw;
            }
            emit_trades(market, res.fills);
            for (const auto& f : res.fills) traded = st.bot->apply_fill(f) || traded;
        }
        emit(market, "QUOTES", std::move(quotes));
        if (!traded) return;
    }
    throw std::runtime_error("bot requote did not settle after repeated crossings");
}

json ExchangeService::do_create_market(const std::string& name, const std::vector<std::string>& labels,
                                       const std::optional<BotConfig>& bot_config)
{
    std::optional<bot::BotState> bot_state;
    if (bot_config) {
        Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(bot_config->beliefs.data(),
                                                             static_cast<Eigen::Index>(bot_config->beliefs.size()));
        if (p.size() != static_cast<Eigen::Index>(labels.size()))
            throw std::invalid_argument("bot beliefs must have one entry per bin");
        bot::validate_beliefs(p);
        decision::UtilitySpec{bot_config->rho}.validate();
        if (bot_config->cash < 0) throw std::invalid_argument("bot cash must be non-negative");
        bot_state = bot::BotState{0, p, bot_config->cash, std::vector<std::int64_t>(labels.size(), 0),
                                  decision::UtilitySpec{bot_config->rho}};
        if (engine_.find_account("bot:" + name)) throw ServiceError(409, "duplicate_name", "bot account name taken");
    }
    const MarketId id = engine_.create_market(name, labels);
    auto& st = markets_[id];
    json out{{"market", id}, {"name", name}, {"labels", labels}};
    if (bot_state) {
        bot_state->account = engine_.open_account("bot:" + name, bot_config->cash);
        bot::AuditSink sink;
        if (audit_out_.is_open())
            sink = [this, id](const json& record) {
                audit_out_ << json{{"market", id}, {"record", record}}.dump() << '\n';
                audit_out_.flush();
            };
        st.bot = std::make_unique<bot::MakerBot>(*bot_state, std::move(sink));
        out["bot_account"] = bot_state->account;
        run_requote(id);
    }
    emit_book(id);
    json entry{{"cmd", "create-market"}, {"name", name}, {"labels", labels}, {"bot", nullptr}};
    if (bot_config)
        entry["bot"] = {{"beliefs", bot_config->beliefs}, {"cash_cents", bot_config->cash}, {"rho", bot_config->rho}};
    journal(entry);
    return out;
}

json ExchangeService::do_open_account(const std::string& name, Cents cash, const std::string& token)
{
    if (tokens_.count(token)) throw std::logic_error("token collision");
    const AccountId id = engine_.open_account(name, cash);
    tokens_[token] = id;
    journal({{"cmd", "open-account"}, {"name", name}, {"cash_cents", cash}, {"token", token}});
    return {{"account", id}, {"token", token}, {"cash_cents", cash}};
}

json ExchangeService::do_place_order(AccountId account, MarketId market, int bin, market::Side side, int price,
                                     std::int64_t qty)
{
    auto& st = state_of(market);
    const auto res = engine_.submit(account, market, bin, side, price, qty);
    journal({{"cmd", "place-order"},
             {"account", account},
             {"market", market},
             {"bin", bin},
             {"side", market::to_string(side)},
             {"price_cents", price},
             {"qty", qty}});
    emit_trades(market, res.fills);
    bool bot_traded = false;
    if (st.bot)
        for (const auto& f : res.fills) bot_traded = st.bot->apply_fill(f) || bot_traded;
    if (bot_traded) run_requote(market);
    emit_book(market);
    json fills = json::array();
    for (const auto& f : res.fills) fills.push_back(market::to_json(f));
    return {{"order", res.id}, {"fills", fills}, {"resting_qty", res.resting}};
}

json ExchangeService::do_cancel_order(AccountId account, market::OrderId order)
{
    const auto o = engine_.order(order);
    const Cents released = engine_.cancel(account, order);
    journal({{"cmd", "cancel-order"}, {"account", account}, {"order", order}});
    emit_book(o->market);
    return {{"order", order}, {"released_cents", released}};
}

json ExchangeService::do_update_beliefs(MarketId market, const std::vector<double>& p)
{
    auto& st = state_of(market);
    if (!st.bot) throw ServiceError(409, "no_bot", "market has no maker bot");
    if (engine_.market_info(market).settled) throw ServiceError(409, "market_closed", "market is settled");
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
    if (v.size() != st.bot->state().beliefs.size())
        throw std::invalid_argument("belief vector has the wrong number of bins");
    bot::validate_beliefs(v);
    st.bot->set_beliefs(v);
    journal({{"cmd", "update-beliefs"}, {"market", market}, {"p", p}});
    emit(market, "BELIEFS", {{"p", p}});
    run_requote(market);
    emit_book(market);
    return {{"market", market}, {"p", p}, {"quotes", bot::to_json(st.bot->last_quotes())}};
}

json ExchangeService::do_settle(MarketId market, int winning_bin)
{
    auto& st = state_of(market);
    if (st.settlement) return *st.settlement;
    const auto result = engine_.settle(market, winning_bin);
    if (st.bot) st.bot->sync_from(engine_, market);
    json out = market::to_json(result);
    st.settlement = out;
    journal({{"cmd", "settle"}, {"market", market}, {"winning_bin", winning_bin}});
    emit(market, "SETTLED", out);
    emit_book(market);
    return out;
}

json ExchangeService::create_market(const std::string& admin_token, const std::string& name,
                                    const std::vector<std::string>& labels, const std::optional<BotConfig>& bot)
{
    std::lock_guard lock(mutex_);
    require_admin(admin_token);
    try {
        return do_create_market(name, labels, bot);
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::open_account(const std::string& name, Cents cash)
{
    std::lock_guard lock(mutex_);
    try {
        return do_open_account(name, cash, generate_token());
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::place_order(const std::string& token, MarketId market, int bin, market::Side side,
                                  int price_cents, std::int64_t qty)
{
    std::lock_guard lock(mutex_);
    const AccountId account = authenticate(token);
    try {
        return do_place_order(account, market, bin, side, price_cents, qty);
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::cancel_order(const std::string& token, market::OrderId order)
{
    std::lock_guard lock(mutex_);
    const AccountId account = authenticate(token);
    try {
        return do_cancel_order(account, order);
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::update_beliefs(const std::string& admin_token, MarketId market, const std::vector<double>& p)
{
    std::lock_guard lock(mutex_);
    require_admin(admin_token);
    try {
        return do_update_beliefs(market, p);
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::settle(const std::string& admin_token, MarketId market, int winning_bin)
{
    std::lock_guard lock(mutex_);
    require_admin(admin_token);
    try {
        return do_settle(market, winning_bin);
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

json ExchangeService::get_book(MarketId market) const
{
    std::lock_guard lock(mutex_);
    state_of(market);
    json book = market::to_json(engine_.snapshot(market, config_.recent_fills));
    const auto& st = state_of(market);
    book["bot_account"] = st.bot ? json(st.bot->state().account) : json(nullptr);
    book["event_seq"] = st.events.size();
    return book;
}

json ExchangeService::positions_of(AccountId account) const
{
    const auto& a = engine_.account(account);
    json positions = json::array();
    for (const auto& [key, z] : a.positions) positions.push_back({{"market", key.first}, {"bin", key.second}, {"qty", z}});
    json orders = json::array();
    for (const auto& o : engine_.open_orders(account)) orders.push_back(market::to_json(o));
    return {{"account", account},    {"name", a.name},          {"cash_cents", a.cash},
            {"escrow_cents", a.escrow}, {"positions", positions}, {"open_orders", orders}};
}

json ExchangeService::get_positions(const std::string& token) const
{
    std::lock_guard lock(mutex_);
    return positions_of(authenticate(token));
}

json ExchangeService::list_markets() const
{
    std::lock_guard lock(mutex_);
    json out = json::array();
    for (MarketId id : engine_.markets()) {
        const auto info = engine_.market_info(id);
        json m{{"market", id}, {"name", info.name}, {"labels", info.labels}, {"settled", info.settled}};
        m["winning_bin"] = info.winning_bin ? json(*info.winning_bin) : json(nullptr);
        out.push_back(std::move(m));
    }
    return out;
}

json ExchangeService::ledger() const
{
    std::lock_guard lock(mutex_);
    return engine_.ledger();
}

std::vector<Event> ExchangeService::events(MarketId market, std::uint64_t from) const
{
    std::lock_guard lock(mutex_);
    const auto& evs = state_of(market).events;
    if (from >= evs.size()) return {};
    return {evs.begin() + static_cast<std::ptrdiff_t>(from), evs.end()};
}

std::vector<Event> ExchangeService::wait_events(MarketId market, std::uint64_t from,
                                                std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    const auto& evs = state_of(market).events;
    events_cv_.wait_for(lock, timeout, [&] { return shut_down_ || evs.size() > from; });
    if (from >= evs.size()) return {};
    return {evs.begin() + static_cast<std::ptrdiff_t>(from), evs.end()};
}

namespace {

std::string token_of(const json& body, const std::string& token)
{
    if (!token.empty()) return token;
    return body.value("token", std::string{});
}

MarketId market_of(const json& body)
{
    if (!body.contains("market")) throw ServiceError(400, "malformed_request", "missing field 'market'");
    return body.at("market").get<MarketId>();
}

}  // namespace

json ExchangeService::dispatch(const std::string& command, const json& body, const std::string& token)
{
    try {
        if (!body.is_object()) throw ServiceError(400, "malformed_request", "request body must be a JSON object");
        const std::string tok = token_of(body, token);
        if (command == "create-market") {
            std::optional<BotConfig> bot;
            if (body.contains("bot") && !body.at("bot").is_null()) {
                const auto& b = body.at("bot");
                bot = BotConfig{b.at("beliefs").get<std::vector<double>>(), b.at("cash_cents").get<Cents>(),
                                b.value("rho", 1.0)};
            }
            return create_market(tok, body.at("name").get<std::string>(),
                                 body.at("bins").get<std::vector<std::string>>(), bot);
        }
        if (command == "open-account")
            return open_account(body.at("name").get<std::string>(), body.at("cash_cents").get<Cents>());
        if (command == "place-order")
            return place_order(tok, market_of(body), body.at("bin").get<int>(),
                               market::side_from_string(body.at("side").get<std::string>()),
                               body.at("price_cents").get<int>(), body.at("qty").get<std::int64_t>());
        if (command == "cancel-order") return cancel_order(tok, body.at("id").get<market::OrderId>());
        if (command == "update-beliefs")
            return update_beliefs(tok, market_of(body), body.at("p").get<std::vector<double>>());
        if (command == "settle") return settle(tok, market_of(body), body.at("winning_bin").get<int>());
        if (command == "get-book") return get_book(market_of(body));
        if (command == "get-positions") return get_positions(tok);
        if (command == "list-markets") return list_markets();
        throw ServiceError(404, "unknown_command", "unknown command '" + command + "'");
    } catch (...) {
        translate_exception(std::current_exception());
    }
}

void ExchangeService::apply(const json& e)
{
    const auto cmd = e.at("cmd").get<std::string>();
    if (cmd == "create-market") {
        std::optional<BotConfig> bot;
        if (!e.at("bot").is_null())
            bot = BotConfig{e.at("bot").at("beliefs").get<std::vector<double>>(), e.at("bot").at("cash_cents").get<Cents>(),
                            e.at("bot").at("rho").get<double>()};
        do_create_market(e.at("name").get<std::string>(), e.at("labels").get<std::vector<std::string>>(), bot);
    } else if (cmd == "open-account") {
        do_open_account(e.at("name").get<std::string>(), e.at("cash_cents").get<Cents>(), e.at("token").get<std::string>());
    } else if (cmd == "place-order") {
        do_place_order(e.at("account").get<AccountId>(), e.at("market").get<MarketId>(), e.at("bin").get<int>(),
                       market::side_from_string(e.at("side").get<std::string>()), e.at("price_cents").get<int>(),
                       e.at("qty").get<std::int64_t>());
    } else if (cmd == "cancel-order") {
        do_cancel_order(e.at("account").get<AccountId>(), e.at("order").get<market::OrderId>());
    } else if (cmd == "update-beliefs") {
        do_update_beliefs(e.at("market").get<MarketId>(), e.at("p").get<std::vector<double>>());
    } else if (cmd == "settle") {
        do_settle(e.at("market").get<MarketId>(), e.at("winning_bin").get<int>());
    } else {
        throw std::runtime_error("unknown journal command '" + cmd + "'");
    }
}

void ExchangeService::replay(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read journal " + path.string());
    replaying_ = true;
    std::string line;
    std::size_t line_no = 0;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            apply(json::parse(line));
        }
    } catch (const std::exception& e) {
        replaying_ = false;
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": journal replay failed: " + e.what());
    }
    replaying_ = false;
}

}  // namespace hpm::service
