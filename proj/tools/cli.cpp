#include "cli.hpp"

#include "hpm/backtest.hpp"
#include "hpm/data_ingest.hpp"
#include "hpm/exchange_service.hpp"
#include "hpm/fixtures.hpp"
#include "hpm/http_server.hpp"
#include "hpm/maker_bot.hpp"
#include "hpm/manifest.hpp"
#include "hpm/reports.hpp"
#include "hpm/scoring.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace hpm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

long long parse_cents(const std::string& dollars)
{
    const Mills m = dollars_to_mills(dollars);
    const std::string_view s = dollars;
    const auto dot = s.find('.');
    if (dot != std::string_view::npos && s.size() - dot - 1 > 2)
        throw std::invalid_argument("amount '" + dollars + "' has sub-cent precision");
    return m / 10;
}

std::vector<double> parse_list(const std::string& csv)
{
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("not a number: '" + item + "'");
        }
        if (used != item.size()) throw std::invalid_argument("not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

namespace {

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct DataOptions {
    std::string model, market, outcomes;
    std::optional<std::uint64_t> seed;
    int states = 6;
    int days = 30;
};

struct Loaded {
    AlignedPanel panel;
    OutcomeTable outcomes;
};

void add_data_options(CLI::App* cmd, DataOptions& d)
{
    cmd->add_option("--model", d.model, "model forecasts CSV (date,state,p_dem)");
    cmd->add_option("--market", d.market, "market closes CSV (date,state,dem_yes,rep_yes)");
    cmd->add_option("--outcomes", d.outcomes, "outcomes CSV (state,winner,margin_votes[,total_votes])");
    cmd->add_option("--seed", d.seed, "generate a synthetic fixture with this seed instead of reading files");
    cmd->add_option("--states", d.states, "states in the synthetic fixture")->check(CLI::Range(1, 676));
    cmd->add_option("--days", d.days, "days in the synthetic fixture")->check(CLI::PositiveNumber);
}

void check_sources(const DataOptions& d)
{
    const bool any_file = !d.model.empty() || !d.market.empty() || !d.outcomes.empty();
    if (d.seed && any_file) throw std::invalid_argument("use either --seed or the three input files, not both");
    if (!d.seed && (d.model.empty() || d.market.empty() || d.outcomes.empty()))
        throw std::invalid_argument("--model, --market and --outcomes are all required (or pass --seed)");
}

Loaded load(const DataOptions& d, const fs::path& out_dir, manifest::RunManifest& m)
{
    check_sources(d);
    fs::path model = d.model, market = d.market, outcomes = d.outcomes;
    if (d.seed) {
        const auto files = fixtures::write(fixtures::generate({*d.seed, d.states, d.days}), out_dir / "fixture");
        model = files.model;
        market = files.market;
        outcomes = files.outcomes;
        m.config["fixture"] = {{"seed", *d.seed}, {"states", d.states}, {"days", d.days}};
    }
    for (const auto& p : {model, market, outcomes}) m.add_input(p);
    Loaded l;
    l.outcomes = parse_outcomes_csv(outcomes);
    l.panel = align(parse_model_csv(model), parse_market_csv(market), l.outcomes);
    return l;
}

void write_file(const fs::path& out_dir, const std::string& name, const std::string& content,
                manifest::RunManifest& m)
{
    const fs::path p = out_dir / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
    f.close();
    if (!f) throw std::runtime_error("write failed: " + p.string());
    m.add_output(out_dir, p);
}

void finish(const fs::path& out_dir, manifest::RunManifest& m, std::ostream& out)
{
    m.write(out_dir / "manifest.json");
    out << "wrote " << m.outputs.size() << " files and manifest.json to " << out_dir.generic_string() << '\n';
}

std::vector<std::string> split_states(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    if (out.empty()) throw std::invalid_argument("--flip needs at least one state");
    return out;
}

std::string fixed(double x, int places)
{
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(places);
    s << x;
    return s.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Hybrid prediction-market toolkit: scoring, backtests, maker-bot quotes and the exchange service"};
    app.name("hpm");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(manifest::kToolVersion));

    std::string out_dir = "out";
    double bin_width = 0.05;
    std::optional<std::uint64_t> seed_common;

    // score
    auto* score = app.add_subcommand("score", "Brier scores, calibration, frequencies and dominance");
    DataOptions score_data;
    add_data_options(score, score_data);
    reports::ScoreOptions score_opts;
    std::string score_date;
    score->add_option("--out", out_dir, "output directory");
    score->add_option("--bin-width", bin_width, "calibration bin width")->check(CLI::Range(1e-6, 1.0));
    score->add_option("--frequency-width", score_opts.frequency_width, "frequency point spacing")
        ->check(CLI::Range(1e-6, 1.0));
    score->add_option("--weight", score_opts.weight.model, "model weight in the hybrid")->check(CLI::Range(0.0, 1.0));
    score->add_option("--date", score_date, "per-state report for this date (YYYY-MM-DD)");

    // backtest
    auto* bt = app.add_subcommand("backtest", "Run the expected-utility trading bot against market closes");
    DataOptions bt_data;
    add_data_options(bt, bt_data);
    backtest::BacktestConfig bt_config;
    std::vector<std::string> flips;
    bool robustness = false;
    std::optional<double> threshold;
    bt->add_option("--out", out_dir, "output directory");
    bt->add_option("--bin-width", bin_width, "unused by backtest; accepted for a uniform interface");
    bt->add_option("--cash", bt_config.initial_cash, "starting cash per state, dollars")->check(CLI::PositiveNumber);
    bt->add_option("--rho", bt_config.utility.rho, "CRRA coefficient (1 = log)")->check(CLI::NonNegativeNumber);
    bt->add_option("--flip", flips, "comma-separated states to flip; repeatable")->take_all();
    bt->add_flag("--robustness", robustness, "compute the robustness diameter");
    bt->add_option("--threshold", threshold, "closeness threshold on margin share")->check(CLI::Range(0.0, 1.0));

    // quotes
    auto* quotes = app.add_subcommand("quotes", "Maker-bot quote ladder for one market");
    std::string beliefs_s, cash_s = "1000", holdings_s;
    double quotes_rho = 1.0;
    bool quotes_json = false;
    std::string quotes_out;
    quotes->add_option("--beliefs", beliefs_s, "comma-separated probabilities, one per bin")->required();
    quotes->add_option("--cash", cash_s, "cash in dollars (whole cents)");
    quotes->add_option("--rho", quotes_rho, "CRRA coefficient (1 = log)")->check(CLI::NonNegativeNumber);
    quotes->add_option("--holdings", holdings_s, "comma-separated integer contract holdings per bin");
    quotes->add_flag("--json", quotes_json, "print JSON instead of a table");
    quotes->add_option("--out", quotes_out, "also write quotes.json and a manifest here");
    quotes->add_option("--seed", seed_common, "accepted for a uniform interface; quotes are deterministic");
    quotes->add_option("--bin-width", bin_width, "accepted for a uniform interface");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the exchange service");
    std::string host = "127.0.0.1", admin_token, journal, audit_log;
    int port = 8080;
    bool demo = false;
    int exit_after_ms = 0;
    serve->add_option("--host", host, "listen address");
    serve->add_option("--port", port, "listen port (0 = any free port)")->check(CLI::Range(0, 65535));
    serve->add_option("--admin-token", admin_token, "admin credential")->envname("HPM_ADMIN_TOKEN");
    serve->add_option("--journal", journal, "append-only command log, replayed at startup");
    serve->add_option("--audit-log", audit_log, "JSON-lines log of every bot quote generation");
    serve->add_flag("--demo", demo, "seed a 3-bin market with a bot believing (0.3,0.5,0.2) and $1000");
    serve->add_option("--exit-after-ms", exit_after_ms, "shut down gracefully after this long (testing)")
        ->check(CLI::NonNegativeNumber);
    serve->add_option("--out", out_dir, "accepted for a uniform interface");
    serve->add_option("--seed", seed_common, "accepted for a uniform interface");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    manifest::RunManifest m;
    m.argv = args;
    try {
        if (score->parsed()) {
            m.command = "score";
            score_opts.calibration_width = bin_width;
            if (!score_date.empty()) score_opts.date = Date::parse(score_date);
            check_sources(score_data);
            const fs::path dir = out_dir;
            fs::create_directories(dir);
            const auto data = load(score_data, dir, m);
            const auto r = reports::score(data.panel, score_opts);
            m.config.update({{"bin_width", bin_width},
                             {"frequency_width", score_opts.frequency_width},
                             {"weight", score_opts.weight.model},
                             {"date", score_date}});
            write_file(dir, "score.json", reports::to_json(r).dump(2) + "\n", m);
            write_file(dir, "daily_brier.csv", reports::daily_csv(r), m);
            write_file(dir, "calibration.csv", reports::calibration_csv(r), m);
            write_file(dir, "frequency.csv", reports::frequency_csv(r), m);
            write_file(dir, "dominance.csv", reports::dominance_csv(r), m);
            if (r.date_report) write_file(dir, "date_report.csv", reports::date_report_csv(*r.date_report), m);
            out << "overall Brier  model " << fixed(r.model_mean, 4) << "  market " << fixed(r.market_mean, 4)
                << "  hybrid " << fixed(r.hybrid_mean, 4) << '\n';
            out << "dominance dates " << r.dominance.dominance_dates << ", trailing streak "
                << r.dominance.trailing_streak << '\n';
            if (r.date_report)
                out << r.date_report->date.to_string() << "  market " << fixed(r.date_report->market_mean, 4)
                    << "  model " << fixed(r.date_report->model_mean, 4) << "  hybrid "
                    << fixed(r.date_report->hybrid_mean, 4) << '\n';
            finish(dir, m, out);
            return 0;
        }
        if (bt->parsed()) {
            m.command = "backtest";
            if (threshold && !robustness) throw std::invalid_argument("--threshold needs --robustness");
            check_sources(bt_data);
            const fs::path dir = out_dir;
            fs::create_directories(dir);
            const auto data = load(bt_data, dir, m);
            const auto report = backtest::run_panel(data.panel, bt_config);
            m.config.update({{"cash", bt_config.initial_cash}, {"rho", bt_config.utility.rho}, {"flip", flips},
                             {"robustness", robustness}});
            m.config["threshold"] = threshold ? json(*threshold) : json(nullptr);
            write_file(dir, "backtest.json", reports::to_json(report).dump(2) + "\n", m);
            write_file(dir, "table1.csv", reports::table1_csv(report), m);
            write_file(dir, "trajectory.csv", reports::trajectory_csv(report), m);
            out << reports::table1_text(report);
            if (!flips.empty()) {
                std::vector<std::vector<std::string>> sets;
                for (const auto& f : flips) sets.push_back(split_states(f));
                const auto rows = backtest::flip_analysis(report, data.outcomes, sets);
                write_file(dir, "flips.json", reports::to_json(rows).dump(2) + "\n", m);
                write_file(dir, "flips.csv", reports::flips_csv(rows), m);
                out << '\n' << reports::flips_text(rows);
            }
            if (robustness) {
                const auto rob = backtest::robustness_diameter(report, data.outcomes, threshold);
                write_file(dir, "robustness.json", reports::to_json(rob).dump(2) + "\n", m);
                out << "\nrobustness diameter "
                    << (rob.diameter ? std::to_string(*rob.diameter) : std::string("infinite"))
                    << ", minimal flipped votes "
                    << (rob.minimal_flipped_votes ? std::to_string(*rob.minimal_flipped_votes) : std::string("none"))
                    << '\n';
            }
            finish(dir, m, out);
            return 0;
        }
        if (quotes->parsed()) {
            m.command = "quotes";
            const auto p = parse_list(beliefs_s);
            bot::BotState state;
            state.beliefs = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
            state.cash = parse_cents(cash_s);
            state.utility.rho = quotes_rho;
            if (holdings_s.empty()) {
                state.holdings.assign(p.size(), 0);
            } else {
                for (double h : parse_list(holdings_s)) {
                    if (h != std::floor(h)) throw std::invalid_argument("holdings must be whole contracts");
                    state.holdings.push_back(static_cast<std::int64_t>(h));
                }
            }
            const auto q = bot::quote_set(state);
            json j{{"inputs", bot::to_json(state)}, {"quotes", bot::to_json(q)}};
            if (quotes_json)
                out << j.dump(2) << '\n';
            else
                out << reports::quote_table(q);
            if (!quotes_out.empty()) {
                const fs::path dir = quotes_out;
                fs::create_directories(dir);
                m.config = j["inputs"];
                write_file(dir, "quotes.json", j.dump(2) + "\n", m);
                m.write(dir / "manifest.json");
            }
            return 0;
        }
        if (serve->parsed()) {
            if (admin_token.empty()) throw std::invalid_argument("an admin token is required (--admin-token or HPM_ADMIN_TOKEN)");
            service::ServiceConfig cfg;
            cfg.admin_token = admin_token;
            if (!journal.empty()) cfg.journal = journal;
            if (!audit_log.empty()) cfg.audit_log = audit_log;
            service::ExchangeService svc(cfg);
            if (demo && svc.list_markets().empty())
                svc.create_market(admin_token, "demo", {"Bin 1", "Bin 2", "Bin 3"},
                                  service::BotConfig{{0.3, 0.5, 0.2}, 100000, 1.0});
            service::HttpServer http(svc);
            const int bound = http.start(host, port);
            out << "listening on " << host << ':' << bound << std::endl;
            g_stop = false;
            auto old_int = std::signal(SIGINT, on_signal);
            auto old_term = std::signal(SIGTERM, on_signal);
            const auto started = std::chrono::steady_clock::now();
            while (!g_stop) {
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
                if (exit_after_ms > 0 &&
                    std::chrono::steady_clock::now() - started >= std::chrono::milliseconds(exit_after_ms))
                    break;
            }
            std::signal(SIGINT, old_int);
            std::signal(SIGTERM, old_term);
            http.stop();
            out << "shut down; journal entries " << svc.journal_entries() << std::endl;
            return 0;
        }
    } catch (const IngestError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const AlignmentError& e) {
        err << "error: " << e.what() << '\n';
        for (std::size_t i = 0; i < std::min<std::size_t>(e.gaps().size(), 10); ++i) {
            const auto& g = e.gaps()[i];
            err << "  missing " << (g.missing_in_model ? "model" : "market") << " row for " << g.state << " on "
                << g.date.to_string() << '\n';
        }
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace hpm::cli
