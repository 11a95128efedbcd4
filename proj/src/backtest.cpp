#include "hpm/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpm::backtest {

void BacktestConfig::validate() const
{
    if (!(initial_cash > 0.0)) throw std::invalid_argument("initial cash must be positive");
    utility.validate();
}

double event_price(double dem_yes, double rep_yes)
{
    if (!(dem_yes > 0.0 && dem_yes < 1.0 && rep_yes > 0.0 && rep_yes < 1.0))
        throw std::invalid_argument("closing prices must lie in (0,1)");
    return (dem_yes + (1.0 - rep_yes)) / 2.0;
}

double event_price(Mills dem_yes, Mills rep_yes)
{
    if (dem_yes <= 0 || dem_yes >= kMillsPerDollar || rep_yes <= 0 || rep_yes >= kMillsPerDollar)
        throw std::invalid_argument("closing prices must lie in (0,1)");
    return static_cast<double>(dem_yes + kMillsPerDollar - rep_yes) / (2.0 * kMillsPerDollar);
}

StepResult step(const Position& position, double belief, double price, const BacktestConfig& config)
{
    if (!(price > 0.0 && price < 1.0)) throw std::invalid_argument("fill price must lie in (0,1)");
    const double x = decision::optimal_binary_trade(belief, price, position.cash, position.contracts, config.utility);
    StepResult out;
    out.trade = x;
    out.after.cash = position.cash - price * x;
    out.after.contracts = position.contracts + x;
    return out;
}

StateRun run_state(const std::string& state, const std::vector<DailyInput>& series, double resolution,
                   const BacktestConfig& config)
{
    config.validate();
    if (resolution != 0.0 && resolution != 1.0) throw std::invalid_argument("resolution must be 0 or 1");
    StateRun run;
    run.trajectory.state = state;
    Position pos{config.initial_cash, 0.0};
    double last_price = 0.0;
    for (const auto& day : series) {
        auto s = step(pos, day.belief, day.price, config);
        pos = s.after;
        last_price = day.price;
        run.trajectory.points.push_back(
            {day.date, day.belief, day.price, s.trade, pos.cash, pos.contracts, pos.value(day.price)});
    }
    auto& r = run.result;
    r.state = state;
    r.initial_cash = config.initial_cash;
    r.cash = pos.cash;
    r.contracts = pos.contracts;
    r.value = series.empty() ? pos.cash : pos.value(last_price);
    r.resolution = resolution;
    r.payoff = pos.cash + pos.contracts * resolution;
    r.profit = r.payoff - r.initial_cash;
    r.return_rate = r.profit / r.initial_cash;
    return run;
}

StateRun run_state(const std::string& state, const std::vector<Date>& dates, const std::vector<double>& beliefs,
                   const std::vector<double>& prices, double resolution, const BacktestConfig& config)
{
    if (dates.size() != beliefs.size() || beliefs.size() != prices.size())
        throw std::invalid_argument("belief and price series are misaligned");
    std::vector<DailyInput> series;
    series.reserve(dates.size());
    for (std::size_t t = 0; t < dates.size(); ++t) series.push_back({dates[t], beliefs[t], prices[t]});
    return run_state(state, series, resolution, config);
}

const StateRun& PanelReport::at(std::string_view state) const
{
    for (const auto& s : states)
        if (s.result.state == state) return s;
    throw std::out_of_range("unknown state '" + std::string(state) + "'");
}

Totals totals_of(const std::vector<StateResult>& results)
{
    Totals t;
    for (const auto& r : results) {
        t.initial_cash += r.initial_cash;
        t.value += r.value;
        t.payoff += r.payoff;
    }
    t.profit = t.payoff - t.initial_cash;
    t.return_rate = t.initial_cash > 0.0 ? t.profit / t.initial_cash : 0.0;
    return t;
}

PanelReport run_panel(const AlignedPanel& panel, const BacktestConfig& config)
{
    config.validate();
    PanelReport report;
    report.config = config;
    std::vector<StateResult> results;
    for (std::size_t j = 0; j < panel.n_states(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        std::vector<DailyInput> series;
        series.reserve(panel.n_days());
        for (std::size_t t = 0; t < panel.n_days(); ++t) {
            const auto row = static_cast<Eigen::Index>(t);
            series.push_back({panel.dates[t], panel.p_model(row, c),
                              event_price(panel.dem_yes(row, c), panel.rep_yes(row, c))});
        }
        report.states.push_back(run_state(panel.states[j], series, panel.r(c), config));
        results.push_back(report.states.back().result);
    }
    report.totals = totals_of(results);
    return report;
}

namespace {

/// Payoff change from toggling one state's resolution.
double flip_delta(const StateResult& r) { return r.resolution == 1.0 ? -r.contracts : r.contracts; }

}  // namespace

std::vector<FlipScenario> flip_analysis(const PanelReport& report, const OutcomeTable& outcomes,
                                        const std::vector<std::vector<std::string>>& flip_sets)
{
    std::vector<FlipScenario> rows;
    for (const auto& set : flip_sets) {
        FlipScenario row;
        row.flipped = set;
        std::vector<std::string> seen;
        double payoff = report.totals.payoff;
        for (const auto& state : set) {
            if (std::find(seen.begin(), seen.end(), state) != seen.end())
                throw std::invalid_argument("state listed twice in flip set: " + state);
            seen.push_back(state);
            payoff += flip_delta(report.at(state).result);
            if (outcomes.contains(state)) row.margin_votes += outcomes.at(state).margin_votes;
        }
        row.payoff = payoff;
        row.profit = payoff - report.totals.initial_cash;
        row.return_rate = row.profit / report.totals.initial_cash;
        rows.push_back(std::move(row));
    }
    return rows;
}

Robustness robustness_diameter(const PanelReport& report, const OutcomeTable& outcomes,
                               std::optional<double> threshold)
{
    Robustness out;
    std::vector<const StateResult*> close;
    for (const auto& s : report.states) {
        const auto& row = outcomes.at(s.result.state);
        if (threshold) {
            auto share = row.margin_share();
            if (!share)
                throw std::invalid_argument("closeness threshold needs total_votes for state " + row.state);
            if (!(*share < *threshold)) continue;
        }
        close.push_back(&s.result);
        out.close_states.push_back(s.result.state);
    }
    if (close.size() > 20) throw std::invalid_argument("too many close states to enumerate (max 20)");

    const std::uint32_t subsets = 1u << close.size();
    for (std::uint32_t mask = 1; mask < subsets; ++mask) {
        double payoff = report.totals.payoff;
        std::int64_t votes = 0;
        std::vector<std::string> names;
        for (std::size_t k = 0; k < close.size(); ++k)
            if (mask & (1u << k)) {
                payoff += flip_delta(*close[k]);
                votes += outcomes.at(close[k]->state).margin_votes;
                names.push_back(close[k]->state);
            }
        if (!(payoff - report.totals.initial_cash < 0.0)) continue;
        if (!out.diameter || names.size() < *out.diameter) {
            out.diameter = names.size();
            out.smallest_subset = names;
        }
        if (!out.minimal_flipped_votes || votes < *out.minimal_flipped_votes) {
            out.minimal_flipped_votes = votes;
            out.cheapest_subset = names;
        }
    }
    return out;
}

}  // namespace hpm::backtest
