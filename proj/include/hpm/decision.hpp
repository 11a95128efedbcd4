#pragma once

// Expected-utility trading decisions for a bot holding cash and event contracts.
//
// An outcome assigns one winning candidate (row) to every jurisdiction (column).
// A portfolio (y, Z) pays y + sum_j Z(winner_j, j) at resolution. Trading X at
// prices Q costs sum_j q_j' x_j, so post-trade terminal wealth in outcome S is
//
//     w(S) = y + sum_j ( s_j'(z_j + x_j) - q_j' x_j ).
//
// The bot maximizes E[u(w)] under CRRA utility subject to w(S) >= 0 for every S.
//
// Portfolio, TradePlan and the evaluation functions are templated on the scalar
// so they can be instantiated with Eigen::AutoDiffScalar for gradient checks.
// The optimizer itself works in double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hpm::decision {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatrixXb = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class InsolventPlan : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutcomeSpaceTooLarge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolverDiagnostics {
    int sweeps = 0;
    double last_max_update = 0.0;
    double projected_gradient_norm = 0.0;
};

class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, SolverDiagnostics d) : std::runtime_error(what), diagnostics(d) {}
    SolverDiagnostics diagnostics;
};

/// Relative risk aversion rho >= 0; rho == 1 is log utility.
struct UtilitySpec {
    double rho = 1.0;

    void validate() const
    {
        if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("risk aversion must be >= 0");
    }
};

template <typename Scalar>
Scalar crra(const Scalar& w, const UtilitySpec& spec)
{
    using std::log;
    using std::pow;
    if (spec.rho >= 1.0 && !(w > 0.0)) throw DomainError("CRRA utility with rho >= 1 needs positive wealth");
    if (w < 0.0) throw DomainError("CRRA utility needs non-negative wealth");
    if (spec.rho == 1.0) return log(w);
    if (spec.rho == 0.0) return w;
    return pow(w, 1.0 - spec.rho) / (1.0 - spec.rho);
}

/// u'(w) = w^-rho
inline double crra_marginal(double w, const UtilitySpec& spec)
{
    if (spec.rho == 0.0) return 1.0;
    if (spec.rho == 1.0) return 1.0 / w;
    return std::pow(w, -spec.rho);
}

/// u''(w) = -rho w^(-rho-1)
inline double crra_curvature(double w, const UtilitySpec& spec)
{
    if (spec.rho == 0.0) return 0.0;
    return -spec.rho * std::pow(w, -spec.rho - 1.0);
}

/// One-hot n x m outcome matrix; column j marks the winner in jurisdiction j.
class OutcomeMatrix {
public:
    OutcomeMatrix(Eigen::Index candidates, std::vector<int> winners) : n_(candidates), winners_(std::move(winners))
    {
        for (int w : winners_)
            if (w < 0 || w >= n_) throw std::invalid_argument("winner index out of range");
    }

    static OutcomeMatrix from_matrix(const Eigen::MatrixXi& s)
    {
        std::vector<int> winners;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            if ((s.col(j).array() != 0 && s.col(j).array() != 1).any() || s.col(j).sum() != 1)
                throw std::invalid_argument("outcome matrix columns must be one-hot");
            Eigen::Index i = 0;
            s.col(j).maxCoeff(&i);
            winners.push_back(static_cast<int>(i));
        }
        return OutcomeMatrix(s.rows(), std::move(winners));
    }

    Eigen::Index candidates() const { return n_; }
    Eigen::Index jurisdictions() const { return static_cast<Eigen::Index>(winners_.size()); }
    int winner(Eigen::Index j) const { return winners_[static_cast<std::size_t>(j)]; }
    const std::vector<int>& winners() const { return winners_; }

    Eigen::MatrixXi matrix() const
    {
        Eigen::MatrixXi s = Eigen::MatrixXi::Zero(n_, jurisdictions());
        for (Eigen::Index j = 0; j < jurisdictions(); ++j) s(winner(j), j) = 1;
        return s;
    }

private:
    Eigen::Index n_;
    std::vector<int> winners_;
};

/// Contract prices q_ij in [0,1]. Only tradable entries may be traded.
struct PriceBoard {
    Eigen::MatrixXd prices;
    MatrixXb tradable;

    explicit PriceBoard(Eigen::MatrixXd q) : prices(std::move(q)), tradable(MatrixXb::Constant(prices.rows(), prices.cols(), true))
    {
        validate();
    }
    PriceBoard(Eigen::MatrixXd q, MatrixXb mask) : prices(std::move(q)), tradable(std::move(mask)) { validate(); }

    void validate() const
    {
        if (tradable.rows() != prices.rows() || tradable.cols() != prices.cols())
            throw std::invalid_argument("tradable mask shape mismatch");
        if ((prices.array() < 0.0).any() || (prices.array() > 1.0).any() || !prices.allFinite())
            throw std::invalid_argument("prices must lie in [0,1]");
    }
};

template <typename Scalar>
struct Portfolio {
    Scalar cash{0};
    Matrix<Scalar> holdings;  // n x m, negative = short
};

template <typename Scalar>
using TradePlan = Matrix<Scalar>;

/// Explicit distribution over outcomes. Unlisted outcomes have probability zero.
struct JointBeliefs {
    struct Entry {
        std::vector<int> winners;  // per jurisdiction
        double probability = 0.0;
    };
    Eigen::Index candidates = 0;
    Eigen::Index jurisdictions = 0;
    std::vector<Entry> outcomes;
};

/// Independent per-jurisdiction distributions, n x m with columns summing to one.
struct MarginalBeliefs {
    Eigen::MatrixXd p;
};

using Beliefs = std::variant<JointBeliefs, MarginalBeliefs>;

inline constexpr double kBeliefTolerance = 1e-9;
/// Largest outcome space enumerated explicitly (2^20 outcomes).
inline constexpr double kJointEnumerationCap = 1048576.0;

inline void validate_beliefs(const Beliefs& beliefs, Eigen::Index n, Eigen::Index m)
{
    if (const auto* j = std::get_if<JointBeliefs>(&beliefs)) {
        if (j->candidates != n || j->jurisdictions != m) throw std::invalid_argument("joint beliefs shape mismatch");
        double total = 0.0;
        for (const auto& e : j->outcomes) {
            if (static_cast<Eigen::Index>(e.winners.size()) != m) throw std::invalid_argument("outcome arity mismatch");
            for (int w : e.winners)
                if (w < 0 || w >= n) throw std::invalid_argument("winner index out of range");
            if (!(e.probability >= 0.0)) throw std::invalid_argument("negative probability");
            total += e.probability;
        }
        if (std::abs(total - 1.0) > kBeliefTolerance) throw std::invalid_argument("joint beliefs must sum to 1");
    } else {
        const auto& p = std::get<MarginalBeliefs>(beliefs).p;
        if (p.rows() != n || p.cols() != m) throw std::invalid_argument("marginal beliefs shape mismatch");
        if ((p.array() < 0.0).any() || !p.allFinite()) throw std::invalid_argument("negative probability");
        for (Eigen::Index j = 0; j < m; ++j)
            if (std::abs(p.col(j).sum() - 1.0) > kBeliefTolerance)
                throw std::invalid_argument("each marginal must sum to 1");
    }
}

/// Expands beliefs to the list of positive-probability outcomes.
inline std::vector<JointBeliefs::Entry> scenarios(const Beliefs& beliefs, Eigen::Index n, Eigen::Index m)
{
    validate_beliefs(beliefs, n, m);
    std::vector<JointBeliefs::Entry> out;
    if (const auto* j = std::get_if<JointBeliefs>(&beliefs)) {
        for (const auto& e : j->outcomes)
            if (e.probability > 0.0) out.push_back(e);
        return out;
    }
    const auto& p = std::get<MarginalBeliefs>(beliefs).p;
    if (static_cast<double>(m) * std::log2(static_cast<double>(std::max<Eigen::Index>(n, 1))) >
        std::log2(kJointEnumerationCap) + 1e-12)
        throw OutcomeSpaceTooLarge("outcome space exceeds the joint-enumeration cap; use partitioned cash");
    out.push_back({std::vector<int>(static_cast<std::size_t>(m), 0), 1.0});
    for (Eigen::Index j = 0; j < m; ++j) {
        std::vector<JointBeliefs::Entry> next;
        next.reserve(out.size() * static_cast<std::size_t>(n));
        for (const auto& e : out)
            for (Eigen::Index i = 0; i < n; ++i) {
                if (p(i, j) <= 0.0) continue;
                auto w = e.winners;
                w[static_cast<std::size_t>(j)] = static_cast<int>(i);
                next.push_back({std::move(w), e.probability * p(i, j)});
            }
        out = std::move(next);
    }
    return out;
}

template <typename Scalar>
void check_shapes(const Portfolio<Scalar>& portfolio, const TradePlan<Scalar>& plan, const PriceBoard& prices)
{
    if (plan.rows() != portfolio.holdings.rows() || plan.cols() != portfolio.holdings.cols() ||
        prices.prices.rows() != plan.rows() || prices.prices.cols() != plan.cols())
        throw std::invalid_argument("portfolio, plan and prices must share one n x m shape");
}

/// Cash plus the payout of the winning contract in every jurisdiction.
template <typename Scalar>
Scalar terminal_wealth(const Portfolio<Scalar>& portfolio, const OutcomeMatrix& outcome)
{
    if (outcome.candidates() != portfolio.holdings.rows() || outcome.jurisdictions() != portfolio.holdings.cols())
        throw std::invalid_argument("outcome shape mismatch");
    Scalar w = portfolio.cash;
    for (Eigen::Index j = 0; j < outcome.jurisdictions(); ++j) w += portfolio.holdings(outcome.winner(j), j);
    return w;
}

/// Per-jurisdiction payoff of the post-trade position if candidate i wins, net of trading cost.
template <typename Scalar>
Matrix<Scalar> net_payoffs(const Portfolio<Scalar>& portfolio, const TradePlan<Scalar>& plan, const PriceBoard& prices)
{
    check_shapes(portfolio, plan, prices);
    Matrix<Scalar> payoff = portfolio.holdings + plan;
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        Scalar cost = Scalar(0);
        for (Eigen::Index i = 0; i < plan.rows(); ++i) cost += prices.prices(i, j) * plan(i, j);
        for (Eigen::Index i = 0; i < plan.rows(); ++i) payoff(i, j) -= cost;
    }
    return payoff;
}

template <typename Scalar>
Scalar post_trade_wealth(const Portfolio<Scalar>& portfolio, const TradePlan<Scalar>& plan, const PriceBoard& prices,
                         const std::vector<int>& winners)
{
    Matrix<Scalar> payoff = net_payoffs(portfolio, plan, prices);
    Scalar w = portfolio.cash;
    for (Eigen::Index j = 0; j < payoff.cols(); ++j) w += payoff(winners[static_cast<std::size_t>(j)], j);
    return w;
}

/// Minimum post-trade terminal wealth over every outcome. Outcomes range over the full
/// product space, so the minimum decomposes into per-jurisdiction minima.
template <typename Scalar>
Scalar worst_case(const Portfolio<Scalar>& portfolio, const TradePlan<Scalar>& plan, const PriceBoard& prices)
{
    Matrix<Scalar> payoff = net_payoffs(portfolio, plan, prices);
    Scalar w = portfolio.cash;
    for (Eigen::Index j = 0; j < payoff.cols(); ++j) {
        Scalar lowest = payoff(0, j);
        for (Eigen::Index i = 1; i < payoff.rows(); ++i)
            if (payoff(i, j) < lowest) lowest = payoff(i, j);
        w += lowest;
    }
    return w;
}

inline constexpr double kSolvencyTolerance = 1e-9;

template <typename Scalar>
Scalar expected_utility(const Portfolio<Scalar>& portfolio, const TradePlan<Scalar>& plan, const PriceBoard& prices,
                        const Beliefs& beliefs, const UtilitySpec& spec)
{
    spec.validate();
    if (worst_case(portfolio, plan, prices) < -kSolvencyTolerance)
        throw InsolventPlan("trade plan violates worst-case solvency");
    const Matrix<Scalar> payoff = net_payoffs(portfolio, plan, prices);
    Scalar eu = Scalar(0);
    for (const auto& s : scenarios(beliefs, plan.rows(), plan.cols())) {
        Scalar w = portfolio.cash;
        for (Eigen::Index j = 0; j < payoff.cols(); ++j) w += payoff(s.winners[static_cast<std::size_t>(j)], j);
        if (w < 0.0) w = Scalar(0) * w;  // within solvency tolerance
        eu += s.probability * crra(w, spec);
    }
    return eu;
}

/// Expected utility when every jurisdiction has its own cash and is resolved independently:
/// books[j] holds (y_j, n x 1 holdings) and the total is the sum of per-jurisdiction utilities.
template <typename Scalar>
Scalar expected_utility_partitioned(const std::vector<Portfolio<Scalar>>& books, const TradePlan<Scalar>& plan,
                                    const PriceBoard& prices, const MarginalBeliefs& beliefs, const UtilitySpec& spec)
{
    if (static_cast<Eigen::Index>(books.size()) != plan.cols())
        throw std::invalid_argument("one book per jurisdiction required");
    Scalar total = Scalar(0);
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        PriceBoard column(prices.prices.col(j), prices.tradable.col(j));
        MarginalBeliefs b{beliefs.p.col(j)};
        TradePlan<Scalar> x = plan.col(j);
        total += expected_utility(books[static_cast<std::size_t>(j)], x, column, Beliefs{b}, spec);
    }
    return total;
}

/// Analytic gradient of expected utility with respect to the trade plan.
inline Eigen::MatrixXd expected_utility_gradient(const Portfolio<double>& portfolio, const Eigen::MatrixXd& plan,
                                                 const PriceBoard& prices, const Beliefs& beliefs,
                                                 const UtilitySpec& spec)
{
    const Eigen::MatrixXd payoff = net_payoffs(portfolio, plan, prices);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(plan.rows(), plan.cols());
    for (const auto& s : scenarios(beliefs, plan.rows(), plan.cols())) {
        double w = portfolio.cash;
        for (Eigen::Index j = 0; j < payoff.cols(); ++j) w += payoff(s.winners[static_cast<std::size_t>(j)], j);
        const double mu = s.probability * crra_marginal(w, spec);
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            grad.col(j) -= mu * prices.prices.col(j);
            grad(s.winners[static_cast<std::size_t>(j)], j) += mu;
        }
    }
    return grad;
}

struct SolverOptions {
    int max_sweeps = 20000;
    double update_tolerance = 1e-10;  // scaled by (1 + |y|)
    int max_line_iterations = 200;
};

struct SolveResult {
    Eigen::MatrixXd plan;
    SolverDiagnostics diagnostics;
};

namespace detail {

/// Concave scalar subproblem along one coordinate: g(d) = sum_k weight_k u'(base_k + slope_k d).
struct LineProblem {
    const std::vector<double>& wealth;
    std::vector<double> slope;
    const std::vector<JointBeliefs::Entry>& outcomes;
    const UtilitySpec& spec;

    double derivative(double d) const
    {
        double g = 0.0;
        for (std::size_t k = 0; k < wealth.size(); ++k)
            if (slope[k] != 0.0) g += outcomes[k].probability * slope[k] * crra_marginal(wealth[k] + slope[k] * d, spec);
        return g;
    }

    double curvature(double d) const
    {
        double h = 0.0;
        for (std::size_t k = 0; k < wealth.size(); ++k)
            if (slope[k] != 0.0)
                h += outcomes[k].probability * slope[k] * slope[k] * crra_curvature(wealth[k] + slope[k] * d, spec);
        return h;
    }

    /// Sum of |terms| of the derivative, used to decide whether g(0) is zero up to rounding.
    double derivative_scale() const
    {
        double s = 0.0;
        for (std::size_t k = 0; k < wealth.size(); ++k)
            s += outcomes[k].probability * std::abs(slope[k]) * crra_marginal(wealth[k], spec);
        return s;
    }
};

/// Root of a decreasing function on [lo, hi] with g(lo) > 0 > g(hi); Newton steps with bisection fallback.
inline double safeguarded_root(const LineProblem& line, double lo, double hi, int max_iter)
{
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < max_iter; ++it) {
        const double g = line.derivative(x);
        if (g == 0.0) return x;
        if (g > 0.0)
            lo = x;
        else
            hi = x;
        const double h = line.curvature(x);
        double next = (h < 0.0 && std::isfinite(h)) ? x - g / h : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * (1.0 + std::abs(x)) || hi - lo <= 4e-16 * (1.0 + std::abs(x)))
            return next;
        x = next;
    }
    return x;
}

}  // namespace detail

/// Maximizes expected utility over continuous trades subject to worst-case solvency.
/// Cyclic coordinate ascent over tradable contracts; each coordinate is a concave scalar
/// problem solved by safeguarded Newton/bisection on its derivative.
inline SolveResult optimal_trades(const Portfolio<double>& portfolio, const PriceBoard& prices, const Beliefs& beliefs,
                                  const UtilitySpec& spec, const SolverOptions& opts = {})
{
    spec.validate();
    const Eigen::Index n = portfolio.holdings.rows();
    const Eigen::Index m = portfolio.holdings.cols();
    if (prices.prices.rows() != n || prices.prices.cols() != m)
        throw std::invalid_argument("prices must match the portfolio shape");
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            if (prices.tradable(i, j) && !(prices.prices(i, j) > 0.0 && prices.prices(i, j) < 1.0))
                throw DomainError("traded prices must lie strictly inside (0,1)");
    // A fully tradable column whose prices do not sum to one lets the bot buy (or sell) the
    // whole set of contracts for a riskless profit, so no optimum exists.
    for (Eigen::Index j = 0; j < m; ++j)
        if (prices.tradable.col(j).all() && std::abs(prices.prices.col(j).sum() - 1.0) > 1e-9)
            throw DomainError("fully tradable prices must sum to one in every jurisdiction");

    // In such a column the full set of contracts is cash, so the optimum is only defined up to
    // adding a multiple of it. Pinning the last contract picks one representative.
    MatrixXb active = prices.tradable;
    for (Eigen::Index j = 0; j < m; ++j)
        if (n > 1 && prices.tradable.col(j).all()) active(n - 1, j) = false;

    const auto outcomes = scenarios(beliefs, n, m);
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(n, m);
    if (worst_case(portfolio, plan, prices) < -kSolvencyTolerance)
        throw InsolventPlan("starting portfolio is insolvent");

    const double scale = 1.0 + std::abs(portfolio.cash);
    const double margin = spec.rho >= 1.0 ? 0.0 : kSolvencyTolerance;

    std::vector<double> wealth(outcomes.size());
    auto refresh_wealth = [&] {
        const Eigen::MatrixXd payoff = net_payoffs(portfolio, plan, prices);
        for (std::size_t k = 0; k < outcomes.size(); ++k) {
            double w = portfolio.cash;
            for (Eigen::Index j = 0; j < m; ++j) w += payoff(outcomes[k].winners[static_cast<std::size_t>(j)], j);
            wealth[k] = w;
        }
    };

    // Feasible step range for coordinate (i, j) given the rest of the plan.
    auto step_bounds = [&](Eigen::Index i, Eigen::Index j) {
        const Eigen::MatrixXd payoff = net_payoffs(portfolio, plan, prices);
        double rest = portfolio.cash;
        for (Eigen::Index k = 0; k < m; ++k)
            if (k != j) rest += payoff.col(k).minCoeff();
        const double q = prices.prices(i, j);
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (Eigen::Index l = 0; l < n; ++l) {
            const double level = rest + payoff(l, j) - margin;
            if (l == i)
                lo = std::max(lo, -level / (1.0 - q));
            else
                hi = std::min(hi, level / q);
        }
        return std::pair{std::min(lo, 0.0), std::max(hi, 0.0)};
    };

    auto line_for = [&](Eigen::Index i, Eigen::Index j) {
        detail::LineProblem line{wealth, std::vector<double>(outcomes.size()), outcomes, spec};
        const double q = prices.prices(i, j);
        for (std::size_t k = 0; k < outcomes.size(); ++k)
            line.slope[k] = (outcomes[k].winners[static_cast<std::size_t>(j)] == i ? 1.0 : 0.0) - q;
        return line;
    };

    // Step back from a solvency boundary by a relative hair. For rho > 0 the marginal utility is
    // infinite at zero wealth, and at large wealth rounding alone can push the bound past zero.
    auto inner = [&](double bound, double toward) {
        if (!std::isfinite(bound)) return bound;
        const double hair = 1e-12 * (1.0 + std::abs(bound));
        return bound > toward ? bound - hair : bound + hair;
    };

    auto solve_coordinate = [&](Eigen::Index i, Eigen::Index j) -> double {
        const auto line = line_for(i, j);
        const double g0 = line.derivative(0.0);
        if (std::abs(g0) <= 1e-14 * line.derivative_scale()) return 0.0;
        auto [lo, hi] = step_bounds(i, j);
        if (g0 > 0.0) {
            double top = inner(hi, 0.0);
            if (!std::isfinite(top)) {
                // Unbounded above only if no outcome limits buying; expand until the derivative turns.
                top = scale;
                while (line.derivative(top) > 0.0 && top < 1e300) top *= 2.0;
            }
            if (top <= 0.0) return 0.0;
            const double gt = line.derivative(top);
            if (!(gt < 0.0)) return top;
            return detail::safeguarded_root(line, 0.0, top, opts.max_line_iterations);
        }
        double bottom = inner(lo, 0.0);
        if (!std::isfinite(bottom)) {
            bottom = -scale;
            while (line.derivative(bottom) < 0.0 && bottom > -1e300) bottom *= 2.0;
        }
        if (bottom >= 0.0) return 0.0;
        const double gb = line.derivative(bottom);
        if (!(gb > 0.0)) return bottom;
        return detail::safeguarded_root(line, bottom, 0.0, opts.max_line_iterations);
    };

    // Coordinate ascent alone crawls when positions are large and strongly coupled, so each
    // sweep is followed by a Newton step over all active coordinates. The step is halved until
    // it stays solvent and does not lower expected utility, and dropped otherwise.
    std::vector<std::pair<Eigen::Index, Eigen::Index>> coords;
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            if (active(i, j)) coords.emplace_back(i, j);
    const auto dim = static_cast<Eigen::Index>(coords.size());
    const bool use_newton =
        spec.rho > 0.0 && dim > 1 && static_cast<double>(outcomes.size()) * static_cast<double>(dim * dim) <= 5e7;

    auto slopes = [&](std::size_t k, Eigen::VectorXd& a) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            const auto [i, j] = coords[static_cast<std::size_t>(c)];
            a(c) = (outcomes[k].winners[static_cast<std::size_t>(j)] == i ? 1.0 : 0.0) - prices.prices(i, j);
        }
    };
    auto objective = [&](const std::vector<double>& w) {
        double eu = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (!(w[k] > 0.0)) return -std::numeric_limits<double>::infinity();
            eu += outcomes[k].probability * crra(w[k], spec);
        }
        return eu;
    };
    auto newton_step = [&]() -> double {
        refresh_wealth();
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd a(dim);
        for (std::size_t k = 0; k < outcomes.size(); ++k) {
            slopes(k, a);
            const double w = wealth[k];
            g += outcomes[k].probability * crra_marginal(w, spec) * a;
            h.noalias() -= (outcomes[k].probability * crra_curvature(w, spec)) * a * a.transpose();
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return 0.0;
        const Eigen::VectorXd d = ldlt.solve(g);
        if (!d.allFinite()) return 0.0;
        std::vector<double> dw(outcomes.size());
        for (std::size_t k = 0; k < outcomes.size(); ++k) {
            slopes(k, a);
            dw[k] = a.dot(d);
        }
        const double base = objective(wealth);
        std::vector<double> trial(wealth.size());
        for (double t = 1.0; t > 1e-12; t *= 0.5) {
            for (std::size_t k = 0; k < wealth.size(); ++k) trial[k] = wealth[k] + t * dw[k];
            const double value = objective(trial);
            if (!(value >= base)) continue;
            Eigen::MatrixXd candidate = plan;
            for (Eigen::Index c = 0; c < dim; ++c) {
                const auto [i, j] = coords[static_cast<std::size_t>(c)];
                candidate(i, j) += t * d(c);
            }
            if (worst_case(portfolio, candidate, prices) < margin) continue;
            plan = candidate;
            return t * d.cwiseAbs().maxCoeff();
        }
        return 0.0;
    };

    SolverDiagnostics diag;
    const double tol = opts.update_tolerance * scale;
    bool converged = false;
    for (diag.sweeps = 1; diag.sweeps <= opts.max_sweeps; ++diag.sweeps) {
        refresh_wealth();
        double max_update = 0.0;
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!active(i, j)) continue;
                const double d = solve_coordinate(i, j);
                if (d == 0.0) continue;
                plan(i, j) += d;
                const double q = prices.prices(i, j);
                for (std::size_t k = 0; k < outcomes.size(); ++k)
                    wealth[k] += ((outcomes[k].winners[static_cast<std::size_t>(j)] == i ? 1.0 : 0.0) - q) * d;
                max_update = std::max(max_update, std::abs(d));
            }
        if (use_newton && max_update >= tol) max_update = std::max(max_update, newton_step());
        diag.last_max_update = max_update;
        if (max_update < tol) {
            converged = true;
            break;
        }
    }

    // Projected gradient: components pushing against an active bound do not count.
    refresh_wealth();
    double norm2 = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!active(i, j)) continue;
            const auto line = line_for(i, j);
            const double g = line.derivative(0.0);
            auto [lo, hi] = step_bounds(i, j);
            const double slack = 1e-9 * scale;
            if ((g > 0.0 && hi <= slack) || (g < 0.0 && lo >= -slack)) continue;
            norm2 += g * g;
        }
    diag.projected_gradient_norm = std::sqrt(norm2);

    if (!converged) {
        std::ostringstream os;
        os << "coordinate ascent did not converge after " << opts.max_sweeps << " sweeps (last update "
           << diag.last_max_update << ", projected gradient " << diag.projected_gradient_norm << ")";
        throw NonConvergence(os.str(), diag);
    }
    return {plan, diag};
}

/// Optimal purchase of a single binary contract under log utility, in closed form.
/// Holding z contracts and cash y, buying x at price q leaves y + z + (1-q)x if the event
/// occurs and y - qx otherwise; the first-order condition gives
///     x* = (p(1-q)y - (1-p)q(y+z)) / (q(1-q)),
/// clipped to the solvency interval [-(y+z)/(1-q), y/q].
inline double binary_log_closed_form(double p, double q, double y, double z)
{
    if (!(q > 0.0 && q < 1.0)) throw DomainError("price must lie strictly inside (0,1)");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("belief must lie in [0,1]");
    if (y < 0.0 || y + z < 0.0) throw InsolventPlan("no solvent trade exists");
    const double x = (p * (1.0 - q) * y - (1.0 - p) * q * (y + z)) / (q * (1.0 - q));
    return std::clamp(x, -(y + z) / (1.0 - q), y / q);
}

/// Portfolio and prices for one binary event: row 0 is the event contract, row 1 its
/// complement, which is not traded.
inline std::pair<Portfolio<double>, PriceBoard> binary_market(double price, double cash, double holding)
{
    Portfolio<double> portfolio{cash, Eigen::MatrixXd::Zero(2, 1)};
    portfolio.holdings(0, 0) = holding;
    Eigen::MatrixXd q(2, 1);
    q << price, 1.0 - price;
    MatrixXb mask(2, 1);
    mask << true, false;
    return {portfolio, PriceBoard(q, mask)};
}

inline MarginalBeliefs binary_beliefs(double p)
{
    Eigen::MatrixXd b(2, 1);
    b << p, 1.0 - p;
    return {b};
}

/// Optimal trade in a single binary event contract for any CRRA preference.
inline double optimal_binary_trade(double p, double price, double cash, double holding, const UtilitySpec& spec)
{
    auto [portfolio, board] = binary_market(price, cash, holding);
    return optimal_trades(portfolio, board, Beliefs{binary_beliefs(p)}, spec).plan(0, 0);
}

}  // namespace hpm::decision
