#pragma once

#include "hpm/data_ingest.hpp"
#include "hpm/decision.hpp"

#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hpm::backtest {

enum class FillPolicy { AverageOfCloses };
enum class QuantityMode { Continuous };

struct BacktestConfig {
    double initial_cash = 1000.0;
    decision::UtilitySpec utility{1.0};
    FillPolicy fill = FillPolicy::AverageOfCloses;
    QuantityMode quantity = QuantityMode::Continuous;

    void validate() const;
};

/// Mean of the Dem-yes close and one minus the Rep-yes close.
double event_price(double dem_yes, double rep_yes);
/// Same, exact on the mill grid.
double event_price(Mills dem_yes, Mills rep_yes);

struct Position {
    double cash = 0.0;
    double contracts = 0.0;

    double value(double price) const { return cash + contracts * price; }
};

struct StepResult {
    double trade = 0.0;
    Position after;
};

/// Trades to the utility-maximizing position at price q; all demand fills at q.
StepResult step(const Position& position, double belief, double price, const BacktestConfig& config);

struct TrajectoryPoint {
    Date date;
    double belief = 0.0;
    double price = 0.0;
    double trade = 0.0;
    double cash = 0.0;       // after the trade
    double contracts = 0.0;  // after the trade
    double value = 0.0;      // cash + contracts * price
};

struct Trajectory {
    std::string state;
    std::vector<TrajectoryPoint> points;
};

struct StateResult {
    std::string state;
    double initial_cash = 0.0;
    double cash = 0.0;
    double contracts = 0.0;
    double value = 0.0;  // mark-to-market at the last price
    double payoff = 0.0;
    double profit = 0.0;
    double return_rate = 0.0;
    double resolution = 0.0;  // 1 if the event occurred
};

struct DailyInput {
    Date date;
    double belief = 0.0;
    double price = 0.0;
};

struct StateRun {
    Trajectory trajectory;
    StateResult result;
};

StateRun run_state(const std::string& state, const std::vector<DailyInput>& series, double resolution,
                   const BacktestConfig& config);

/// Overload for parallel belief/price series; throws on length mismatch.
StateRun run_state(const std::string& state, const std::vector<Date>& dates, const std::vector<double>& beliefs,
                   const std::vector<double>& prices, double resolution, const BacktestConfig& config);

struct Totals {
    double initial_cash = 0.0;
    double value = 0.0;
    double payoff = 0.0;
    double profit = 0.0;
    double return_rate = 0.0;
};

struct PanelReport {
    BacktestConfig config;
    std::vector<StateRun> states;
    Totals totals;

    const StateRun& at(std::string_view state) const;
};

Totals totals_of(const std::vector<StateResult>& results);
PanelReport run_panel(const AlignedPanel& panel, const BacktestConfig& config);

struct FlipScenario {
    std::vector<std::string> flipped;
    std::int64_t margin_votes = 0;
    double payoff = 0.0;
    double profit = 0.0;
    double return_rate = 0.0;
};

/// Recomputes payoffs with the listed states' resolutions toggled. Trades are unchanged.
std::vector<FlipScenario> flip_analysis(const PanelReport& report, const OutcomeTable& outcomes,
                                        const std::vector<std::vector<std::string>>& flip_sets);

struct Robustness {
    std::optional<std::size_t> diameter;  // nullopt = infinite (no loss-inducing subset)
    std::optional<std::int64_t> minimal_flipped_votes;
    std::vector<std::string> close_states;
    std::vector<std::string> smallest_subset;
    std::vector<std::string> cheapest_subset;
};

/// Smallest set of close states whose flip makes total profit negative, and the smallest
/// total vote margin among all loss-inducing sets. States are close when their margin share
/// is below threshold; with no threshold every state is a candidate. A threshold needs
/// total_votes for every state in the report.
Robustness robustness_diameter(const PanelReport& report, const OutcomeTable& outcomes,
                               std::optional<double> threshold);

}  // namespace hpm::backtest
