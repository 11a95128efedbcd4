#include "hpm/decision.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hpm::decision;

namespace {

const UtilitySpec kLog{1.0};

// Independent oracle for the single binary log-utility problem: bisection on the
// first-order condition p(1-q)/W1 = (1-p)q/W0, written out by hand.
double foc_bisection(double p, double q, double y, double z)
{
    auto g = [&](double x) {
        const double w1 = y + z + (1.0 - q) * x;
        const double w0 = y - q * x;
        return p * (1.0 - q) / w1 - (1.0 - p) * q / w0;
    };
    double lo = -(y + z) / (1.0 - q), hi = y / q;
    const double span = hi - lo;
    lo += 1e-13 * span;
    hi -= 1e-13 * span;
    if (g(lo) <= 0.0) return lo;
    if (g(hi) >= 0.0) return hi;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct Problem {
    Portfolio<double> portfolio;
    PriceBoard prices;
    MarginalBeliefs beliefs;
};

Problem random_problem(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd q(n, m), p(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            q(i, j) = 0.1 + u(rng);
            p(i, j) = 0.05 + u(rng);
        }
        q.col(j) /= q.col(j).sum();
        p.col(j) /= p.col(j).sum();
    }
    Portfolio<double> pf{10.0 + 990.0 * u(rng), Eigen::MatrixXd::Zero(n, m)};
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) pf.holdings(i, j) = 20.0 * u(rng) - 5.0;
    return {pf, PriceBoard(q), MarginalBeliefs{p}};
}

}  // namespace

TEST_CASE("crra examples")
{
    CHECK(crra(1.0, kLog) == 0.0);
    CHECK(crra(7.5, UtilitySpec{0.0}) == 7.5);
    CHECK(crra(4.0, UtilitySpec{0.5}) == doctest::Approx(4.0));
    CHECK(crra(4.0, UtilitySpec{2.0}) == doctest::Approx(-0.25));
    CHECK_THROWS_AS(crra(0.0, kLog), DomainError);
    CHECK_THROWS_AS(crra(-1.0, UtilitySpec{0.5}), DomainError);
    CHECK(crra(0.0, UtilitySpec{0.5}) == 0.0);
    CHECK_THROWS(UtilitySpec{-1.0}.validate());
}

TEST_CASE("terminal wealth examples")
{
    Portfolio<double> cash_only{5.0, Eigen::MatrixXd::Zero(3, 2)};
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(terminal_wealth(cash_only, OutcomeMatrix(3, {a, b})) == 5.0);

    Portfolio<double> mixed{0.0, Eigen::MatrixXd(2, 1)};
    mixed.holdings << 2.0, -1.0;
    CHECK(terminal_wealth(mixed, OutcomeMatrix(2, {0})) == 2.0);

    Portfolio<double> wi{89.92, Eigen::MatrixXd(2, 1)};
    wi.holdings << 1484.09, 0.0;
    CHECK(terminal_wealth(wi, OutcomeMatrix(2, {0})) == doctest::Approx(1574.01));

    Eigen::MatrixXi bad(2, 1);
    bad << 1, 1;
    CHECK_THROWS(OutcomeMatrix::from_matrix(bad));
    Eigen::MatrixXi good(2, 2);
    good << 0, 1, 1, 0;
    CHECK(OutcomeMatrix::from_matrix(good).winners() == std::vector<int>{1, 0});
    CHECK(OutcomeMatrix::from_matrix(good).matrix() == good);
}

TEST_CASE("worst-case examples")
{
    Portfolio<double> y{3.0, Eigen::MatrixXd::Zero(2, 1)};
    Eigen::MatrixXd half(2, 1);
    half << 0.5, 0.5;
    CHECK(worst_case(y, Eigen::MatrixXd::Zero(2, 1).eval(), PriceBoard(half)) == 3.0);

    Portfolio<double> one{1.0, Eigen::MatrixXd::Zero(2, 1)};
    Eigen::MatrixXd shortx(2, 1);
    shortx << -2.0, 0.0;
    CHECK(worst_case(one, shortx, PriceBoard(half)) == doctest::Approx(0.0));
    CHECK(post_trade_wealth(one, shortx, PriceBoard(half), {0}) == doctest::Approx(0.0));
    CHECK(post_trade_wealth(one, shortx, PriceBoard(half), {1}) == doctest::Approx(2.0));

    auto [broke, board] = binary_market(0.4, 0.0, 0.0);
    Eigen::MatrixXd buy(2, 1);
    buy << 1.0, 0.0;
    CHECK(worst_case(broke, buy, board) == doctest::Approx(-0.4));
    CHECK_THROWS_AS(expected_utility(broke, buy, board, Beliefs{binary_beliefs(0.5)}, kLog), InsolventPlan);
}

TEST_CASE("expected utility examples")
{
    Portfolio<double> unit{1.0, Eigen::MatrixXd::Zero(2, 1)};
    Eigen::MatrixXd half(2, 1);
    half << 0.5, 0.5;
    CHECK(expected_utility(unit, Eigen::MatrixXd::Zero(2, 1).eval(), PriceBoard(half), Beliefs{binary_beliefs(0.5)},
                           kLog) == doctest::Approx(0.0));

    auto [pf, board] = binary_market(0.29, 1000.0, 0.0);
    Eigen::MatrixXd x(2, 1);
    x << 10.0, 0.0;
    const double expected = 0.3 * std::log(1007.1) + 0.7 * std::log(997.1);
    CHECK(expected_utility(pf, x, board, Beliefs{binary_beliefs(0.3)}, kLog) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("Jensen: fair prices never beat holding cash")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index n : {2, 3, 5}) {
        const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(n, 1, 1.0 / static_cast<double>(n));
        const MarginalBeliefs b{q};
        Portfolio<double> pf{100.0, Eigen::MatrixXd::Zero(n, 1)};
        for (int k = 0; k < 200; ++k) {
            Eigen::MatrixXd x(n, 1);
            for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = 40.0 * u(rng);
            if (worst_case(pf, x, PriceBoard(q)) <= 0.0) continue;
            for (double rho : {0.0, 0.5, 1.0, 2.0})
                CHECK(expected_utility(pf, x, PriceBoard(q), Beliefs{b}, UtilitySpec{rho}) <=
                      crra(100.0, UtilitySpec{rho}) + 1e-12);
        }
    }
}

TEST_CASE("joint and marginal beliefs agree for independent jurisdictions")
{
    std::mt19937_64 rng(9);
    auto pr = random_problem(rng, 2, 3);
    JointBeliefs joint{2, 3, scenarios(Beliefs{pr.beliefs}, 2, 3)};
    CHECK(joint.outcomes.size() == 8);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 3, 0.5);
    const double a = expected_utility(pr.portfolio, x, pr.prices, Beliefs{pr.beliefs}, kLog);
    const double b = expected_utility(pr.portfolio, x, pr.prices, Beliefs{joint}, kLog);
    CHECK(a == doctest::Approx(b).epsilon(1e-13));

    joint.outcomes[0].probability += 0.01;
    CHECK_THROWS(validate_beliefs(Beliefs{joint}, 2, 3));
    MarginalBeliefs bad{Eigen::MatrixXd::Constant(2, 3, 0.4)};
    CHECK_THROWS(validate_beliefs(Beliefs{bad}, 2, 3));
}

TEST_CASE("joint enumeration cap")
{
    MarginalBeliefs twenty{Eigen::MatrixXd::Constant(2, 20, 0.5)};
    MarginalBeliefs over{Eigen::MatrixXd::Constant(2, 21, 0.5)};
    CHECK_NOTHROW(validate_beliefs(Beliefs{twenty}, 2, 20));
    CHECK_THROWS_AS(scenarios(Beliefs{over}, 2, 21), OutcomeSpaceTooLarge);

    // Partitioned cash evaluates each jurisdiction on its own.
    const Eigen::Index m = 21;
    std::vector<Portfolio<double>> books(static_cast<std::size_t>(m), Portfolio<double>{100.0, Eigen::MatrixXd::Zero(2, 1)});
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(2, m, 0.5);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, m);
    const double total = expected_utility_partitioned(books, x, PriceBoard(q), over, kLog);
    CHECK(total == doctest::Approx(21.0 * std::log(100.0)));
}

TEST_CASE("closed form examples")
{
    CHECK(binary_log_closed_form(0.4, 0.4, 1000.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::round(100.0 * binary_log_closed_form(0.3, 0.29, 1000.0, 0.0)) / 100.0 == 48.57);
    CHECK(std::round(100.0 * binary_log_closed_form(0.5, 0.49, 1000.0, 0.0)) / 100.0 == 40.02);
    CHECK_THROWS_AS(binary_log_closed_form(0.5, 0.0, 1000.0, 0.0), DomainError);
    CHECK_THROWS_AS(binary_log_closed_form(0.5, 1.0, 1000.0, 0.0), DomainError);

    // Hand-derived FOC oracle agrees with the closed form.
    CHECK(binary_log_closed_form(0.3, 0.29, 1000.0, 0.0) == doctest::Approx(foc_bisection(0.3, 0.29, 1000.0, 0.0)));
    CHECK(binary_log_closed_form(0.7, 0.6, 500.0, 120.0) == doctest::Approx(foc_bisection(0.7, 0.6, 500.0, 120.0)));
}

TEST_CASE("optimal trades match the closed form on random binary instances")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double p = 0.05 + 0.9 * u(rng);
        const double q = 0.05 + 0.9 * u(rng);
        const double y = 10.0 + (1e4 - 10.0) * u(rng);
        const double z = -y / 2.0 + 1.5 * y * u(rng);
        const double oracle = binary_log_closed_form(p, q, y, z);
        const double x = optimal_binary_trade(p, q, y, z, kLog);
        REQUIRE(std::abs(x - oracle) <= 1e-6 * (1.0 + std::abs(oracle)));
        REQUIRE(std::abs(foc_bisection(p, q, y, z) - oracle) <= 1e-6 * (1.0 + std::abs(oracle)));
    }
}

TEST_CASE("beliefs equal to prices means no trade")
{
    for (double p : {0.1, 0.37, 0.5, 0.9})
        for (double rho : {0.5, 1.0, 3.0}) CHECK(std::abs(optimal_binary_trade(p, p, 1000.0, 0.0, UtilitySpec{rho})) < 1e-7);

    Eigen::MatrixXd q(3, 1);
    q << 0.3, 0.5, 0.2;
    Portfolio<double> pf{1000.0, Eigen::MatrixXd::Zero(3, 1)};
    const auto r = optimal_trades(pf, PriceBoard(q), Beliefs{MarginalBeliefs{q}}, kLog);
    CHECK(r.plan.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sign rule and demand monotonicity")
{
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        const double p = 0.05 + 0.9 * u(rng);
        const double y = 10.0 + 5000.0 * u(rng);
        const double z = -y / 3.0 + y * u(rng);
        const UtilitySpec spec{0.25 + 3.0 * u(rng)};
        const double q = 0.05 + 0.9 * u(rng);
        if (std::abs(p - q) > 1e-3) {
            const double x = optimal_binary_trade(p, q, y, 0.0, spec);
            CHECK((x > 0.0) == (p > q));
        }
        double last = std::numeric_limits<double>::infinity();
        for (double price = 0.05; price < 0.951; price += 0.05) {
            const double x = optimal_binary_trade(p, price, y, z, spec);
            CHECK(x <= last + 1e-7 * (1.0 + std::abs(last)));
            last = x;
        }
    }
}

TEST_CASE("homogeneity: scaling wealth scales the optimum")
{
    std::mt19937_64 rng(77);
    for (int k = 0; k < 50; ++k) {
        auto pr = random_problem(rng, 3, 2);
        for (double rho : {0.5, 1.0, 2.0}) {
            const UtilitySpec spec{rho};
            const auto base = optimal_trades(pr.portfolio, pr.prices, Beliefs{pr.beliefs}, spec).plan;
            for (double lambda : {0.1, 3.0}) {
                Portfolio<double> scaled{lambda * pr.portfolio.cash, lambda * pr.portfolio.holdings};
                const auto x = optimal_trades(scaled, pr.prices, Beliefs{pr.beliefs}, spec).plan;
                CHECK((x - lambda * base).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + lambda * base.cwiseAbs().maxCoeff()));
            }
        }
    }
}

TEST_CASE("solver output is always solvent and stationary")
{
    std::mt19937_64 rng(101);
    for (int k = 0; k < 100; ++k) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 3);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 3);
        auto pr = random_problem(rng, n, m);
        for (double rho : {0.5, 1.0, 2.0}) {
            const auto r = optimal_trades(pr.portfolio, pr.prices, Beliefs{pr.beliefs}, UtilitySpec{rho});
            REQUIRE(worst_case(pr.portfolio, r.plan, pr.prices) >= -1e-9);
            CHECK(r.diagnostics.projected_gradient_norm <= 1e-9 * (1.0 + std::abs(pr.portfolio.cash)));
        }
    }
}

TEST_CASE("solvency holds along random trade sequences")
{
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int path = 0; path < 50; ++path) {
        double y = 1000.0, z = 0.0;
        const UtilitySpec spec{0.5 + 2.0 * u(rng)};
        for (int t = 0; t < 30; ++t) {
            const double p = 0.02 + 0.96 * u(rng);
            const double q = 0.02 + 0.96 * u(rng);
            const double x = optimal_binary_trade(p, q, y, z, spec);
            y -= q * x;
            z += x;
            REQUIRE(std::min(y, y + z) >= -1e-9);
        }
    }
}

TEST_CASE("analytic gradient agrees with autodiff and finite differences")
{
    using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
    std::mt19937_64 rng(55);
    for (int k = 0; k < 30; ++k) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 2);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 2);
        auto pr = random_problem(rng, n, m);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        Eigen::MatrixXd x(n, m);
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < n; ++i) x(i, j) = u(rng);
        if (worst_case(pr.portfolio, x, pr.prices) <= 1.0) continue;
        const Beliefs b{pr.beliefs};

        for (double rho : {0.5, 1.0, 2.0}) {
            const UtilitySpec spec{rho};
            const auto analytic = expected_utility_gradient(pr.portfolio, x, pr.prices, b, spec);

            const auto vars = n * m;
            Portfolio<AD> pa{AD(pr.portfolio.cash, Eigen::VectorXd::Zero(vars)), Matrix<AD>(n, m)};
            TradePlan<AD> xa(n, m);
            for (Eigen::Index j = 0; j < m; ++j)
                for (Eigen::Index i = 0; i < n; ++i) {
                    pa.holdings(i, j) = AD(pr.portfolio.holdings(i, j), Eigen::VectorXd::Zero(vars));
                    xa(i, j) = AD(x(i, j), vars, j * n + i);
                }
            const AD eu = expected_utility(pa, xa, pr.prices, b, spec);
            CHECK(eu.value() == doctest::Approx(expected_utility(pr.portfolio, x, pr.prices, b, spec)));

            for (Eigen::Index j = 0; j < m; ++j)
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double g = analytic(i, j);
                    const double ad = eu.derivatives()(j * n + i);
                    CHECK(std::abs(g - ad) <= 1e-6 * std::max(1e-12, std::abs(g)) + 1e-15);

                    const double h = 1e-4;
                    Eigen::MatrixXd xp = x, xm = x;
                    xp(i, j) += h;
                    xm(i, j) -= h;
                    const double fd = (expected_utility(pr.portfolio, xp, pr.prices, b, spec) -
                                       expected_utility(pr.portfolio, xm, pr.prices, b, spec)) /
                                      (2.0 * h);
                    CHECK(std::abs(g - fd) <= 1e-5 * std::abs(g) + 1e-11);
                }
        }
    }
}

TEST_CASE("arbitrage price boards are rejected")
{
    Eigen::MatrixXd q(2, 1);
    q << 0.4, 0.4;
    Portfolio<double> pf{100.0, Eigen::MatrixXd::Zero(2, 1)};
    CHECK_THROWS_AS(optimal_trades(pf, PriceBoard(q), Beliefs{binary_beliefs(0.5)}, kLog), DomainError);
    q << 0.0, 1.0;
    CHECK_THROWS_AS(optimal_trades(pf, PriceBoard(q), Beliefs{binary_beliefs(0.5)}, kLog), DomainError);
}

TEST_CASE("untradable entries are left alone")
{
    auto [pf, board] = binary_market(0.29, 1000.0, 0.0);
    const auto r = optimal_trades(pf, board, Beliefs{binary_beliefs(0.3)}, kLog);
    CHECK(r.plan(1, 0) == 0.0);
    CHECK(r.plan(0, 0) == doctest::Approx(binary_log_closed_form(0.3, 0.29, 1000.0, 0.0)).epsilon(1e-9));
}
