#pragma once

#include "hpm/backtest.hpp"
#include "hpm/maker_bot.hpp"
#include "hpm/scoring.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hpm::reports {

/// Shortest decimal that round-trips to the same double.
std::string fmt(double x);
/// Fixed two decimals with a leading minus for negatives.
std::string money(double x);

struct ScoreOptions {
    scoring::HybridWeight weight;
    double calibration_width = 0.05;
    double frequency_width = 0.01;
    std::optional<Date> date;
};

struct ScoreReport {
    ScoreOptions options;
    std::size_t states = 0;
    std::size_t dates = 0;
    double model_mean = 0.0;
    double market_mean = 0.0;
    double hybrid_mean = 0.0;
    std::vector<scoring::BrierSeries> daily;  // model, market, hybrid
    std::vector<std::pair<scoring::Source, scoring::CalibrationCurve>> calibration;
    std::vector<scoring::FrequencyReport> frequency;
    scoring::DominanceReport dominance;
    std::optional<scoring::DateReport> date_report;
};

ScoreReport score(const AlignedPanel& panel, const ScoreOptions& options);

nlohmann::json to_json(const ScoreReport& r);
std::string daily_csv(const ScoreReport& r);        // date,source,value
std::string calibration_csv(const ScoreReport& r);  // source,lower,upper,count,mean_forecast,realized_frequency
std::string frequency_csv(const ScoreReport& r);    // source,point,count,distinct_states
std::string dominance_csv(const ScoreReport& r);    // date,model,market,hybrid,hybrid_beats_both
std::string date_report_csv(const scoring::DateReport& r);  // state,source,value

nlohmann::json to_json(const backtest::PanelReport& r);
std::string table1_csv(const backtest::PanelReport& r);
std::string table1_text(const backtest::PanelReport& r);
std::string trajectory_csv(const backtest::PanelReport& r);  // state,date,belief,price,trade,cash,contracts,value

nlohmann::json to_json(const std::vector<backtest::FlipScenario>& rows);
std::string flips_csv(const std::vector<backtest::FlipScenario>& rows);
std::string flips_text(const std::vector<backtest::FlipScenario>& rows);
nlohmann::json to_json(const backtest::Robustness& r);

/// Order-book table: Bin | Bid Price | Bid Quantity | Ask Price | Ask Quantity.
std::string quote_table(const bot::QuoteSet& q);

}  // namespace hpm::reports
