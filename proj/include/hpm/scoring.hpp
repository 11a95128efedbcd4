#pragma once

#include "hpm/data_ingest.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace hpm::scoring {

enum class Source { Model, Market, Hybrid };

std::string to_string(Source s);
Source source_from_string(std::string_view s);

/// Squared error of a probabilistic forecast against a 0/1 realization.
inline double brier(double p, double r) { return (p - r) * (p - r); }

/// Weight on the model in the hybrid forecast; 0.5 is the unweighted mean.
struct HybridWeight {
    double model = 0.5;
};

/// Forecast matrix (dates x states) for a source.
Eigen::MatrixXd forecasts(const AlignedPanel& panel, Source source, HybridWeight w = {});

/// Per-record Brier scores (dates x states).
Eigen::MatrixXd brier_matrix(const AlignedPanel& panel, Source source, HybridWeight w = {});

struct BrierSeries {
    Source source = Source::Model;
    std::vector<Date> dates;
    Eigen::VectorXd daily_mean;  // one entry per date
    Eigen::MatrixXd scores;      // dates x states
};

BrierSeries daily_mean(const AlignedPanel& panel, Source source, HybridWeight w = {});
double overall_mean(const AlignedPanel& panel, Source source, HybridWeight w = {});

/// Per-record weighted average of model and market probabilities.
ForecastPanel synthetic(const AlignedPanel& panel, HybridWeight w = {});

struct Forecast {
    double p = 0.0;
    double r = 0.0;
};

struct CalibrationBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_forecast = 0.0;
    double realized_frequency = 0.0;
};

struct CalibrationCurve {
    double bin_width = 0.05;
    std::vector<CalibrationBin> bins;  // empty bins omitted
};

/// Half-open bins [k*w, (k+1)*w), last bin closed. bin_width must divide 1.
CalibrationCurve calibration(std::span<const Forecast> forecasts, double bin_width = 0.05);
std::vector<Forecast> panel_forecasts(const AlignedPanel& panel, Source source, HybridWeight w = {});

struct FrequencyBin {
    double point = 0.0;  // probability point k*w
    std::size_t count = 0;
    std::size_t distinct_states = 0;
};

struct FrequencyReport {
    Source source = Source::Model;
    double bin_width = 0.01;
    std::vector<FrequencyBin> bins;  // only non-empty points

    const FrequencyBin& peak_distinct_states() const;
};

/// Counts forecasts at each probability point, rounding p to the nearest multiple of bin_width.
FrequencyReport frequency(const AlignedPanel& panel, Source source, double bin_width = 0.01);

struct DominanceReport {
    std::vector<Date> dates;
    std::vector<bool> hybrid_beats_both;
    std::size_t dominance_dates = 0;
    std::size_t trailing_streak = 0;  // consecutive dominance dates ending at the last date
};

DominanceReport dominance(const AlignedPanel& panel, HybridWeight w = {});

struct StateScore {
    std::string state;
    double model = 0.0;
    double market = 0.0;
    double hybrid = 0.0;
};

struct DateReport {
    Date date;
    std::vector<StateScore> states;
    double model_mean = 0.0;
    double market_mean = 0.0;
    double hybrid_mean = 0.0;
};

/// Per-state scores on one date, plus cross-state means.
DateReport date_report(const AlignedPanel& panel, Date date, HybridWeight w = {});

}  // namespace hpm::scoring
