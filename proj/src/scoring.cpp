#include "hpm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace hpm::scoring {

std::string to_string(Source s)
{
    switch (s) {
    case Source::Model: return "model";
    case Source::Market: return "market";
    case Source::Hybrid: return "hybrid";
    }
    return "?";
}

Source source_from_string(std::string_view s)
{
    if (s == "model" || s == "MODEL") return Source::Model;
    if (s == "market" || s == "MARKET") return Source::Market;
    if (s == "hybrid" || s == "HYBRID") return Source::Hybrid;
    throw std::invalid_argument("unknown source '" + std::string(s) + "'");
}

Eigen::MatrixXd forecasts(const AlignedPanel& panel, Source source, HybridWeight w)
{
    switch (source) {
    case Source::Model: return panel.p_model;
    case Source::Market: return panel.p_market;
    case Source::Hybrid:
        if (w.model < 0.0 || w.model > 1.0) throw std::invalid_argument("hybrid weight outside [0,1]");
        return w.model * panel.p_model + (1.0 - w.model) * panel.p_market;
    }
    throw std::logic_error("unreachable");
}

Eigen::MatrixXd brier_matrix(const AlignedPanel& panel, Source source, HybridWeight w)
{
    Eigen::MatrixXd p = forecasts(panel, source, w);
    return (p.rowwise() - panel.r.transpose()).array().square().matrix();
}

BrierSeries daily_mean(const AlignedPanel& panel, Source source, HybridWeight w)
{
    if (panel.empty()) throw std::invalid_argument("daily_mean: empty panel");
    BrierSeries out;
    out.source = source;
    out.dates = panel.dates;
    out.scores = brier_matrix(panel, source, w);
    out.daily_mean = out.scores.rowwise().mean();
    return out;
}

double overall_mean(const AlignedPanel& panel, Source source, HybridWeight w)
{
    if (panel.empty()) throw std::invalid_argument("overall_mean: empty panel");
    return brier_matrix(panel, source, w).mean();
}

ForecastPanel synthetic(const AlignedPanel& panel, HybridWeight w)
{
    ForecastPanel out;
    Eigen::MatrixXd p = forecasts(panel, Source::Hybrid, w);
    out.entries.reserve(static_cast<std::size_t>(p.size()));
    for (std::size_t t = 0; t < panel.n_days(); ++t)
        for (std::size_t j = 0; j < panel.n_states(); ++j)
            out.entries.push_back({panel.dates[t], panel.states[j],
                                   p(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))});
    return out;
}

namespace {

std::size_t bins_per_unit(double bin_width)
{
    if (!(bin_width > 0.0) || bin_width > 1.0) throw std::invalid_argument("bin width must be in (0,1]");
    double k = 1.0 / bin_width;
    double rounded = std::round(k);
    if (std::abs(k - rounded) > 1e-9 * rounded) throw std::invalid_argument("bin width must divide 1 evenly");
    return static_cast<std::size_t>(rounded);
}

}  // namespace

CalibrationCurve calibration(std::span<const Forecast> forecasts, double bin_width)
{
    if (forecasts.empty()) throw std::invalid_argument("calibration: no forecasts");
    const std::size_t k = bins_per_unit(bin_width);
    std::vector<std::size_t> count(k, 0);
    std::vector<double> sum_p(k, 0.0), sum_r(k, 0.0);
    for (const auto& f : forecasts) {
        if (f.p < 0.0 || f.p > 1.0) throw std::invalid_argument("calibration: probability outside [0,1]");
        // Small slack so that e.g. 0.3 lands in [0.3, 0.35) despite 0.3/0.05 = 5.999...
        auto b = static_cast<std::size_t>(std::floor(f.p * static_cast<double>(k) + 1e-9));
        b = std::min(b, k - 1);
        ++count[b];
        sum_p[b] += f.p;
        sum_r[b] += f.r;
    }
    CalibrationCurve curve;
    curve.bin_width = bin_width;
    for (std::size_t b = 0; b < k; ++b) {
        if (count[b] == 0) continue;
        auto c = static_cast<double>(count[b]);
        curve.bins.push_back({static_cast<double>(b) / static_cast<double>(k),
                              static_cast<double>(b + 1) / static_cast<double>(k), count[b], sum_p[b] / c,
                              sum_r[b] / c});
    }
    return curve;
}

std::vector<Forecast> panel_forecasts(const AlignedPanel& panel, Source source, HybridWeight w)
{
    Eigen::MatrixXd p = forecasts(panel, source, w);
    std::vector<Forecast> out;
    out.reserve(static_cast<std::size_t>(p.size()));
    for (Eigen::Index t = 0; t < p.rows(); ++t)
        for (Eigen::Index j = 0; j < p.cols(); ++j) out.push_back({p(t, j), panel.r(j)});
    return out;
}

const FrequencyBin& FrequencyReport::peak_distinct_states() const
{
    if (bins.empty()) throw std::logic_error("frequency report is empty");
    return *std::max_element(bins.begin(), bins.end(), [](const auto& a, const auto& b) {
        return a.distinct_states < b.distinct_states;
    });
}

FrequencyReport frequency(const AlignedPanel& panel, Source source, double bin_width)
{
    const std::size_t k = bins_per_unit(bin_width);
    Eigen::MatrixXd p = forecasts(panel, source);
    std::map<std::size_t, std::pair<std::size_t, std::set<Eigen::Index>>> acc;
    for (Eigen::Index t = 0; t < p.rows(); ++t)
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            auto point = static_cast<std::size_t>(std::llround(p(t, j) * static_cast<double>(k)));
            auto& [count, states] = acc[point];
            ++count;
            states.insert(j);
        }
    FrequencyReport report;
    report.source = source;
    report.bin_width = bin_width;
    for (const auto& [point, v] : acc)
        report.bins.push_back({static_cast<double>(point) / static_cast<double>(k), v.first, v.second.size()});
    return report;
}

DominanceReport dominance(const AlignedPanel& panel, HybridWeight w)
{
    DominanceReport report;
    if (panel.empty()) return report;
    Eigen::VectorXd model = daily_mean(panel, Source::Model).daily_mean;
    Eigen::VectorXd market = daily_mean(panel, Source::Market).daily_mean;
    Eigen::VectorXd hybrid = daily_mean(panel, Source::Hybrid, w).daily_mean;
    report.dates = panel.dates;
    report.hybrid_beats_both.resize(panel.n_days());
    for (Eigen::Index t = 0; t < model.size(); ++t) {
        bool beats = hybrid(t) < std::min(model(t), market(t));
        report.hybrid_beats_both[static_cast<std::size_t>(t)] = beats;
        report.dominance_dates += beats ? 1 : 0;
    }
    for (auto it = report.hybrid_beats_both.rbegin(); it != report.hybrid_beats_both.rend() && *it; ++it)
        ++report.trailing_streak;
    return report;
}

DateReport date_report(const AlignedPanel& panel, Date date, HybridWeight w)
{
    const auto t = static_cast<Eigen::Index>(panel.date_index(date));
    Eigen::MatrixXd bm = brier_matrix(panel, Source::Model);
    Eigen::MatrixXd bk = brier_matrix(panel, Source::Market);
    Eigen::MatrixXd bh = brier_matrix(panel, Source::Hybrid, w);
    DateReport out;
    out.date = date;
    for (std::size_t j = 0; j < panel.n_states(); ++j) {
        auto c = static_cast<Eigen::Index>(j);
        out.states.push_back({panel.states[j], bm(t, c), bk(t, c), bh(t, c)});
    }
    out.model_mean = bm.row(t).mean();
    out.market_mean = bk.row(t).mean();
    out.hybrid_mean = bh.row(t).mean();
    return out;
}

}  // namespace hpm::scoring
