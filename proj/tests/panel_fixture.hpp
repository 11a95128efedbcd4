#pragma once

#include "hpm/data_ingest.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace hpm::test {

// Panel built directly from matrices (dates x states); dates start at 2020-10-01.
inline AlignedPanel make_panel(const Eigen::MatrixXd& model, const Eigen::MatrixXd& market, const Eigen::VectorXd& r,
                               std::vector<std::string> states = {})
{
    AlignedPanel p;
    const auto T = model.rows();
    const auto n = model.cols();
    if (states.empty())
        for (Eigen::Index j = 0; j < n; ++j)
            states.push_back(std::string{static_cast<char>('A' + j / 26), static_cast<char>('A' + j % 26)});
    p.states = std::move(states);
    const auto start = Date::parse("2020-10-01");
    for (Eigen::Index t = 0; t < T; ++t) p.dates.push_back(Date{start.days + static_cast<std::int32_t>(t)});
    p.p_model = model;
    p.p_market = market;
    p.dem_yes = (market * 1000.0).array().round().cast<Mills>();
    p.rep_yes = ((1.0 - market.array()) * 1000.0).round().cast<Mills>();
    p.r = r;
    return p;
}

}  // namespace hpm::test
