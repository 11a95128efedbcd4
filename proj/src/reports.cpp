#include "hpm/reports.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hpm::reports {

using nlohmann::json;
using scoring::Source;

std::string fmt(double x)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return {buf, end};
}

std::string money(double x)
{
    if (std::abs(x) < 0.005) x = 0.0;  // no "-0.00"
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

namespace {

constexpr Source kSources[] = {Source::Model, Source::Market, Source::Hybrid};

std::string percent(double rate)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * rate);
    return buf;
}

std::string join(const std::vector<std::string>& v, const std::string& sep)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

std::string quote_csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace

ScoreReport score(const AlignedPanel& panel, const ScoreOptions& options)
{
    ScoreReport r;
    r.options = options;
    r.states = panel.n_states();
    r.dates = panel.n_days();
    r.model_mean = scoring::overall_mean(panel, Source::Model, options.weight);
    r.market_mean = scoring::overall_mean(panel, Source::Market, options.weight);
    r.hybrid_mean = scoring::overall_mean(panel, Source::Hybrid, options.weight);
    for (Source s : kSources) {
        r.daily.push_back(scoring::daily_mean(panel, s, options.weight));
        const auto fc = scoring::panel_forecasts(panel, s, options.weight);
        r.calibration.emplace_back(s, scoring::calibration(fc, options.calibration_width));
        r.frequency.push_back(scoring::frequency(panel, s, options.frequency_width));
    }
    r.dominance = scoring::dominance(panel, options.weight);
    if (options.date) r.date_report = scoring::date_report(panel, *options.date, options.weight);
    return r;
}

json to_json(const ScoreReport& r)
{
    json out{{"states", r.states},
             {"dates", r.dates},
             {"hybrid_weight_model", r.options.weight.model},
             {"calibration_bin_width", r.options.calibration_width},
             {"frequency_bin_width", r.options.frequency_width},
             {"overall", {{"model", r.model_mean}, {"market", r.market_mean}, {"hybrid", r.hybrid_mean}}},
             {"dominance",
              {{"dominance_dates", r.dominance.dominance_dates}, {"trailing_streak", r.dominance.trailing_streak}}}};
    json peaks = json::object();
    for (const auto& f : r.frequency) {
        if (f.bins.empty()) continue;
        const auto& p = f.peak_distinct_states();
        peaks[scoring::to_string(f.source)] = {{"point", p.point}, {"distinct_states", p.distinct_states}};
    }
    out["frequency_peaks"] = peaks;
    if (r.date_report) {
        const auto& d = *r.date_report;
        out["date_report"] = {{"date", d.date.to_string()},
                              {"model", d.model_mean},
                              {"market", d.market_mean},
                              {"hybrid", d.hybrid_mean}};
    }
    return out;
}

std::string daily_csv(const ScoreReport& r)
{
    std::ostringstream out;
    out << "date,source,value\n";
    for (const auto& s : r.daily)
        for (std::size_t t = 0; t < s.dates.size(); ++t)
            out << s.dates[t].to_string() << ',' << scoring::to_string(s.source) << ','
                << fmt(s.daily_mean(static_cast<Eigen::Index>(t))) << '\n';
    return out.str();
}

std::string calibration_csv(const ScoreReport& r)
{
    std::ostringstream out;
    out << "source,lower,upper,count,mean_forecast,realized_frequency\n";
    for (const auto& [source, curve] : r.calibration)
        for (const auto& b : curve.bins)
            out << scoring::to_string(source) << ',' << fmt(b.lower) << ',' << fmt(b.upper) << ',' << b.count << ','
                << fmt(b.mean_forecast) << ',' << fmt(b.realized_frequency) << '\n';
    return out.str();
}

std::string frequency_csv(const ScoreReport& r)
{
    std::ostringstream out;
    out << "source,point,count,distinct_states\n";
    for (const auto& f : r.frequency)
        for (const auto& b : f.bins)
            out << scoring::to_string(f.source) << ',' << fmt(b.point) << ',' << b.count << ',' << b.distinct_states
                << '\n';
    return out.str();
}

std::string dominance_csv(const ScoreReport& r)
{
    std::ostringstream out;
    out << "date,model,market,hybrid,hybrid_beats_both\n";
    for (std::size_t t = 0; t < r.dominance.dates.size(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        out << r.dominance.dates[t].to_string() << ',' << fmt(r.daily[0].daily_mean(i)) << ','
            << fmt(r.daily[1].daily_mean(i)) << ',' << fmt(r.daily[2].daily_mean(i)) << ','
            << (r.dominance.hybrid_beats_both[t] ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string date_report_csv(const scoring::DateReport& r)
{
    std::ostringstream out;
    out << "state,source,value\n";
    for (const auto& s : r.states) {
        out << quote_csv_field(s.state) << ",market," << fmt(s.market) << '\n';
        out << quote_csv_field(s.state) << ",model," << fmt(s.model) << '\n';
        out << quote_csv_field(s.state) << ",hybrid," << fmt(s.hybrid) << '\n';
    }
    return out.str();
}

json to_json(const backtest::PanelReport& r)
{
    json states = json::array();
    for (const auto& s : r.states) {
        const auto& x = s.result;
        states.push_back({{"state", x.state},
                          {"initial_cash", x.initial_cash},
                          {"cash", x.cash},
                          {"contracts", x.contracts},
                          {"value", x.value},
                          {"payoff", x.payoff},
                          {"profit", x.profit},
                          {"return", x.return_rate},
                          {"resolution", x.resolution}});
    }
    const auto& t = r.totals;
    return {{"config", {{"initial_cash", r.config.initial_cash}, {"rho", r.config.utility.rho}}},
            {"states", states},
            {"totals",
             {{"initial_cash", t.initial_cash},
              {"value", t.value},
              {"payoff", t.payoff},
              {"profit", t.profit},
              {"return", t.return_rate}}}};
}

std::string table1_csv(const backtest::PanelReport& r)
{
    std::ostringstream out;
    out << "state,cash,contracts,value,payoff,profit,return\n";
    for (const auto& s : r.states) {
        const auto& x = s.result;
        out << quote_csv_field(x.state) << ',' << fmt(x.cash) << ',' << fmt(x.contracts) << ',' << fmt(x.value) << ','
            << fmt(x.payoff) << ',' << fmt(x.profit) << ',' << fmt(x.return_rate) << '\n';
    }
    const auto& t = r.totals;
    out << "Total,,," << fmt(t.value) << ',' << fmt(t.payoff) << ',' << fmt(t.profit) << ',' << fmt(t.return_rate)
        << '\n';
    return out.str();
}

std::string table1_text(const backtest::PanelReport& r)
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %12s %10s %12s %12s %12s %8s\n", "State", "Cash", "Contracts", "Value",
                  "Payoff", "Profit", "Return");
    out << line;
    for (const auto& s : r.states) {
        const auto& x = s.result;
        std::snprintf(line, sizeof line, "%-16s %12s %10.2f %12s %12s %12s %7.0f%%\n", x.state.c_str(),
                      money(x.cash).c_str(), x.contracts, money(x.value).c_str(), money(x.payoff).c_str(),
                      money(x.profit).c_str(), 100.0 * x.return_rate);
        out << line;
    }
    const auto& t = r.totals;
    std::snprintf(line, sizeof line, "%-16s %12s %10s %12s %12s %12s %7.0f%%\n", "Total", "", "", money(t.value).c_str(),
                  money(t.payoff).c_str(), money(t.profit).c_str(), 100.0 * t.return_rate);
    out << line;
    return out.str();
}

std::string trajectory_csv(const backtest::PanelReport& r)
{
    std::ostringstream out;
    out << "state,date,belief,price,trade,cash,contracts,value\n";
    for (const auto& s : r.states)
        for (const auto& p : s.trajectory.points)
            out << quote_csv_field(s.trajectory.state) << ',' << p.date.to_string() << ',' << fmt(p.belief) << ','
                << fmt(p.price) << ',' << fmt(p.trade) << ',' << fmt(p.cash) << ',' << fmt(p.contracts) << ','
                << fmt(p.value) << '\n';
    return out.str();
}

json to_json(const std::vector<backtest::FlipScenario>& rows)
{
    json out = json::array();
    for (const auto& f : rows)
        out.push_back({{"flipped", f.flipped},
                       {"margin_votes", f.margin_votes},
                       {"payoff", f.payoff},
                       {"profit", f.profit},
                       {"return", f.return_rate}});
    return out;
}

std::string flips_csv(const std::vector<backtest::FlipScenario>& rows)
{
    std::ostringstream out;
    out << "flipped,margin_votes,payoff,profit,return\n";
    for (const auto& f : rows)
        out << quote_csv_field(join(f.flipped, "+")) << ',' << f.margin_votes << ',' << fmt(f.payoff) << ','
            << fmt(f.profit) << ',' << fmt(f.return_rate) << '\n';
    return out.str();
}

std::string flips_text(const std::vector<backtest::FlipScenario>& rows)
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %10s %12s %12s %8s\n", "Flipped State(s)", "Margin", "Payoff", "Profit",
                  "Rate");
    out << line;
    for (const auto& f : rows) {
        std::snprintf(line, sizeof line, "%-28s %10lld %12s %12s %8s\n", join(f.flipped, ", ").c_str(),
                      static_cast<long long>(f.margin_votes), money(f.payoff).c_str(), money(f.profit).c_str(),
                      percent(f.return_rate).c_str());
        out << line;
    }
    return out.str();
}

json to_json(const backtest::Robustness& r)
{
    json out{{"close_states", r.close_states},
             {"smallest_subset", r.smallest_subset},
             {"cheapest_subset", r.cheapest_subset}};
    out["diameter"] = r.diameter ? json(*r.diameter) : json(nullptr);
    out["minimal_flipped_votes"] = r.minimal_flipped_votes ? json(*r.minimal_flipped_votes) : json(nullptr);
    return out;
}

std::string quote_table(const bot::QuoteSet& q)
{
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "%-4s| %-10s %-13s %-10s %-13s\n", "Bin", "Bid Price", "Bid Quantity",
                  "Ask Price", "Ask Quantity");
    out << line;
    auto price = [](const std::optional<bot::Quote>& s) {
        if (!s) return std::string("-");
        char b[16];
        std::snprintf(b, sizeof b, "%.2f", s->price / 100.0);
        return std::string(b);
    };
    auto qty = [](const std::optional<bot::Quote>& s) { return s ? std::to_string(s->quantity) : std::string("-"); };
    for (std::size_t i = 0; i < q.bins.size(); ++i) {
        const auto& b = q.bins[i];
        std::snprintf(line, sizeof line, "%-4zu| %-10s %-13s %-10s %-13s\n", i + 1, price(b.bid).c_str(),
                      qty(b.bid).c_str(), price(b.ask).c_str(), qty(b.ask).c_str());
        out << line;
    }
    return out.str();
}

}  // namespace hpm::reports
