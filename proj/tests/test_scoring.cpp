#include "hpm/scoring.hpp"

#include "panel_fixture.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace hpm;
using namespace hpm::scoring;
using hpm::test::make_panel;

namespace {

// Two states, two dates. On the first date the model is badly wrong in AA and the market
// is badly wrong in AB, so averaging cancels the errors. On the second the sources agree.
AlignedPanel dominance_fixture()
{
    Eigen::MatrixXd model(2, 2), market(2, 2);
    model << 0.2, 0.9,
             0.8, 0.8;
    market << 0.9, 0.2,
              0.8, 0.8;
    Eigen::VectorXd r(2);
    r << 1.0, 1.0;
    return make_panel(model, market, r);
}

}  // namespace

TEST_CASE("brier examples")
{
    CHECK(brier(1.0, 1.0) == 0.0);
    CHECK(brier(0.0, 1.0) == 1.0);
    CHECK(brier(0.5, 0.0) == 0.25);
    CHECK(brier(0.97, 1.0) == doctest::Approx(0.0009));
}

TEST_CASE("brier symmetry and range")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double p = u(rng);
        const double r = (rng() & 1) ? 1.0 : 0.0;
        CHECK(brier(p, r) == doctest::Approx(brier(1.0 - p, 1.0 - r)).epsilon(1e-15));
        CHECK(brier(p, r) >= 0.0);
        CHECK(brier(p, r) <= 1.0);
    }
}

TEST_CASE("hybrid forecast examples")
{
    Eigen::MatrixXd model(1, 3), market(1, 3);
    model << 0.4, 0.3, 0.78;
    market << 0.6, 0.3, 0.62;
    const auto panel = make_panel(model, market, Eigen::VectorXd::Ones(3));
    const auto h = forecasts(panel, Source::Hybrid);
    CHECK(h(0, 0) == doctest::Approx(0.5));
    CHECK(h(0, 1) == doctest::Approx(0.3));
    CHECK(h(0, 2) == doctest::Approx(0.70));

    const auto s = synthetic(panel);
    REQUIRE(s.entries.size() == 3);
    CHECK(s.entries[2].p == doctest::Approx(0.70));

    const auto weighted = forecasts(panel, Source::Hybrid, HybridWeight{1.0});
    CHECK(weighted(0, 0) == doctest::Approx(0.4));
    CHECK_THROWS(forecasts(panel, Source::Hybrid, HybridWeight{1.5}));
}

TEST_CASE("per-record betweenness")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100000; ++i) {
        const double a = u(rng), b = u(rng);
        const double r = (rng() & 1) ? 1.0 : 0.0;
        const double h = brier(0.5 * (a + b), r);
        const double lo = std::min(brier(a, r), brier(b, r));
        const double hi = std::max(brier(a, r), brier(b, r));
        REQUIRE(h >= lo - 1e-15);
        REQUIRE(h <= hi + 1e-15);
    }
}

TEST_CASE("daily and overall means")
{
    Eigen::MatrixXd model(2, 2), market(2, 2);
    model << 0.9, 0.2,
             0.6, 0.5;
    market << 0.7, 0.4,
              0.5, 0.5;
    Eigen::VectorXd r(2);
    r << 1.0, 0.0;
    const auto panel = make_panel(model, market, r);
    const auto d = daily_mean(panel, Source::Model);
    CHECK(d.daily_mean(0) == doctest::Approx((0.01 + 0.04) / 2));
    CHECK(d.daily_mean(1) == doctest::Approx((0.16 + 0.25) / 2));
    CHECK(overall_mean(panel, Source::Model) == doctest::Approx((0.01 + 0.04 + 0.16 + 0.25) / 4));
    CHECK(overall_mean(panel, Source::Market) == doctest::Approx((0.09 + 0.16 + 0.25 + 0.25) / 4));
    CHECK(d.dates == panel.dates);

    AlignedPanel empty;
    CHECK_THROWS(overall_mean(empty, Source::Model));
}

TEST_CASE("means are invariant under state and date permutations")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    const Eigen::Index T = 7, n = 5;
    Eigen::MatrixXd model(T, n), market(T, n);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index j = 0; j < n; ++j) {
            model(t, j) = u(rng);
            market(t, j) = u(rng);
        }
    Eigen::VectorXd r(n);
    for (Eigen::Index j = 0; j < n; ++j) r(j) = static_cast<double>(rng() & 1);
    const auto base = make_panel(model, market, r);

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd pm(T, n), pk(T, n);
    Eigen::VectorXd pr(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        pm.col(j) = model.col(perm[static_cast<std::size_t>(j)]);
        pk.col(j) = market.col(perm[static_cast<std::size_t>(j)]);
        pr(j) = r(perm[static_cast<std::size_t>(j)]);
    }
    const auto by_state = make_panel(pm, pk, pr);
    for (Source s : {Source::Model, Source::Market, Source::Hybrid}) {
        const auto a = daily_mean(base, s).daily_mean;
        const auto b = daily_mean(by_state, s).daily_mean;
        for (Eigen::Index t = 0; t < T; ++t) CHECK(a(t) == doctest::Approx(b(t)).epsilon(1e-14));
    }

    Eigen::MatrixXd rm = model.colwise().reverse(), rk = market.colwise().reverse();
    const auto by_date = make_panel(rm, rk, r);
    for (Source s : {Source::Model, Source::Market, Source::Hybrid})
        CHECK(overall_mean(base, s) == doctest::Approx(overall_mean(by_date, s)).epsilon(1e-14));
}

TEST_CASE("calibration bins")
{
    std::vector<Forecast> half{{0.5, 1.0}, {0.5, 0.0}, {0.5, 1.0}, {0.5, 0.0}};
    auto c = calibration(half, 0.05);
    REQUIRE(c.bins.size() == 1);
    CHECK(c.bins[0].realized_frequency == 0.5);
    CHECK(c.bins[0].lower == doctest::Approx(0.5));
    CHECK(c.bins[0].count == 4);

    std::vector<Forecast> sure{{0.99, 1.0}};
    c = calibration(sure, 0.05);
    REQUIRE(c.bins.size() == 1);
    CHECK(c.bins[0].realized_frequency == 1.0);
    CHECK(c.bins[0].upper == doctest::Approx(1.0));

    // Upper edge goes to the last bin; interior edges are half-open.
    std::vector<Forecast> edges{{1.0, 1.0}, {0.05, 0.0}, {0.0, 0.0}};
    c = calibration(edges, 0.05);
    REQUIRE(c.bins.size() == 3);
    CHECK(c.bins[0].lower == 0.0);
    CHECK(c.bins[1].lower == doctest::Approx(0.05));
    CHECK(c.bins[2].lower == doctest::Approx(0.95));

    CHECK_THROWS(calibration(std::vector<Forecast>{}, 0.05));
    CHECK_THROWS(calibration(half, 0.03));
    CHECK_THROWS(calibration(std::vector<Forecast>{{1.2, 1.0}}, 0.05));
}

TEST_CASE("calibration of a well-calibrated source stays inside binomial bands")
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Forecast> f;
    for (int i = 0; i < 40000; ++i) {
        const double p = u(rng);
        f.push_back({p, u(rng) < p ? 1.0 : 0.0});
    }
    const auto c = calibration(f, 0.05);
    CHECK(c.bins.size() == 20);
    for (const auto& b : c.bins) {
        const double n = static_cast<double>(b.count);
        const double sigma = std::sqrt(b.mean_forecast * (1.0 - b.mean_forecast) / n);
        CHECK(std::abs(b.realized_frequency - b.mean_forecast) <= 3.0 * sigma + 1e-12);
        CHECK(b.realized_frequency >= 0.0);
        CHECK(b.realized_frequency <= 1.0);
    }
}

TEST_CASE("frequency counts records and distinct states per point")
{
    Eigen::MatrixXd one(1, 1);
    one << 0.634;
    auto f = frequency(make_panel(one, one, Eigen::VectorXd::Ones(1)), Source::Market, 0.01);
    REQUIRE(f.bins.size() == 1);
    CHECK(f.bins[0].point == doctest::Approx(0.63));
    CHECK(f.bins[0].count == 1);
    CHECK(f.bins[0].distinct_states == 1);

    Eigen::MatrixXd m(3, 2);
    m << 0.63, 0.63,
         0.63, 0.54,
         0.54, 0.54;
    f = frequency(make_panel(m, m, Eigen::VectorXd::Ones(2)), Source::Model, 0.01);
    REQUIRE(f.bins.size() == 2);
    CHECK(f.bins[0].point == doctest::Approx(0.54));
    CHECK(f.bins[0].count == 3);
    CHECK(f.bins[0].distinct_states == 2);
    CHECK(f.bins[1].count == 3);
    CHECK(f.bins[1].distinct_states == 2);
    CHECK(f.peak_distinct_states().distinct_states == 2);
}

TEST_CASE("dominance")
{
    const auto panel = dominance_fixture();
    const auto d = dominance(panel);
    REQUIRE(d.hybrid_beats_both.size() == 2);
    CHECK(d.hybrid_beats_both[0]);
    CHECK_FALSE(d.hybrid_beats_both[1]);
    CHECK(d.dominance_dates == 1);
    CHECK(d.trailing_streak == 0);

    // Independent check by hand: 0.325 for each source, 0.2025 for the average.
    const auto model = daily_mean(panel, Source::Model).daily_mean;
    const auto hybrid = daily_mean(panel, Source::Hybrid).daily_mean;
    CHECK(model(0) == doctest::Approx(0.325));
    CHECK(hybrid(0) == doctest::Approx(0.2025));
    CHECK(hybrid(0) < daily_mean(panel, Source::Market).daily_mean(0));

    // Every single record still lies between its two components.
    const auto bm = brier_matrix(panel, Source::Model);
    const auto bk = brier_matrix(panel, Source::Market);
    const auto bh = brier_matrix(panel, Source::Hybrid);
    CHECK((bh.array() >= bm.cwiseMin(bk).array() - 1e-15).all());
    CHECK((bh.array() <= bm.cwiseMax(bk).array() + 1e-15).all());

    Eigen::MatrixXd same(3, 2);
    same << 0.3, 0.6, 0.7, 0.2, 0.5, 0.5;
    CHECK(dominance(make_panel(same, same, Eigen::VectorXd::Ones(2))).dominance_dates == 0);

    // Streak counts back from the last date.
    Eigen::MatrixXd a(3, 2), b(3, 2);
    a << 0.8, 0.8, 0.2, 0.9, 0.2, 0.9;
    b << 0.8, 0.8, 0.9, 0.2, 0.9, 0.2;
    const auto s = dominance(make_panel(a, b, Eigen::VectorXd::Ones(2)));
    CHECK(s.dominance_dates == 2);
    CHECK(s.trailing_streak == 2);
}

TEST_CASE("date report")
{
    const auto panel = dominance_fixture();
    const auto r = date_report(panel, panel.dates[0]);
    REQUIRE(r.states.size() == 2);
    CHECK(r.states[0].state == "AA");
    CHECK(r.states[0].model == doctest::Approx(0.64));
    CHECK(r.states[0].market == doctest::Approx(0.01));
    CHECK(r.states[0].hybrid == doctest::Approx(0.2025));
    CHECK(r.model_mean == doctest::Approx(0.325));
    CHECK(r.hybrid_mean == doctest::Approx(0.2025));
    CHECK_THROWS_AS(date_report(panel, Date::parse("2019-01-01")), std::out_of_range);
}

TEST_CASE("source names round-trip")
{
    for (Source s : {Source::Model, Source::Market, Source::Hybrid}) CHECK(source_from_string(to_string(s)) == s);
    CHECK_THROWS(source_from_string("oracle"));
}
