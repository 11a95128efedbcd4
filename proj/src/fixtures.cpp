#include "hpm/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace hpm::fixtures {

namespace {

// std distributions are implementation-defined, so draws are built from raw engine bits.
class Draws {
public:
    explicit Draws(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Sum of uniforms; close enough to a bell for fixture noise.
    double noise(double scale)
    {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += uniform() - 0.5;
        return s * scale;
    }

private:
    std::mt19937_64 engine_;
};

double round_to(double x, double step) { return std::round(x / step) * step; }

std::string state_code(int k)
{
    std::string s;
    s += static_cast<char>('A' + k / 26);
    s += static_cast<char>('A' + k % 26);
    return s;
}

}  // namespace

SyntheticData generate(const SyntheticSpec& spec)
{
    if (spec.states < 1 || spec.states > 26 * 26) throw std::invalid_argument("states must be in [1, 676]");
    if (spec.days < 1) throw std::invalid_argument("days must be positive");
    Draws rng(spec.seed);
    SyntheticData out;
    for (int k = 0; k < spec.states; ++k) {
        const std::string state = state_code(k);
        const double truth = rng.uniform(0.05, 0.95);
        const bool dem_won = rng.uniform() < truth;
        double model = std::clamp(truth + rng.noise(0.4), 0.02, 0.98);
        double market = std::clamp(truth + rng.noise(0.4), 0.05, 0.95);
        for (int t = 0; t < spec.days; ++t) {
            const Date d{spec.start.days + t};
            // Both sources drift toward the latent probability; the model a little faster.
            model = std::clamp(0.9 * model + 0.1 * truth + rng.noise(0.08), 0.01, 0.99);
            market = std::clamp(0.95 * market + 0.05 * truth + rng.noise(0.06), 0.03, 0.97);
            out.model.entries.push_back({d, state, round_to(model, 1e-4)});
            const double overround = rng.uniform(0.0, 0.04);
            const double dem = std::clamp(round_to(market + overround / 2, 0.01), 0.01, 0.99);
            const double rep = std::clamp(round_to(1.0 - market + overround / 2, 0.01), 0.01, 0.99);
            out.market.entries.push_back({d, state, static_cast<Mills>(std::lround(dem * kMillsPerDollar)),
                                          static_cast<Mills>(std::lround(rep * kMillsPerDollar))});
        }
        const auto total = static_cast<std::int64_t>(std::floor(rng.uniform(5e5, 6e6)));
        const auto margin = static_cast<std::int64_t>(std::floor(rng.uniform(0.001, 0.2) * static_cast<double>(total)));
        out.outcomes.rows.push_back({state, dem_won ? Party::Dem : Party::Rep, margin, total});
    }
    return out;
}

FixtureFiles write(const SyntheticData& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    FixtureFiles files{dir / "model.csv", dir / "market.csv", dir / "outcomes.csv"};
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(files.model);
        f << "date,state,p_dem\n";
        for (const auto& e : data.model.entries)
            f << e.date.to_string() << ',' << e.state << ',' << std::fixed << std::setprecision(4) << e.p << '\n';
    }
    {
        auto f = open(files.market);
        f << "date,state,dem_yes,rep_yes\n";
        for (const auto& e : data.market.entries)
            f << e.date.to_string() << ',' << e.state << ',' << std::fixed << std::setprecision(3)
              << mills_to_dollars(e.dem_yes) << ',' << mills_to_dollars(e.rep_yes) << '\n';
    }
    {
        auto f = open(files.outcomes);
        f << "state,winner,margin_votes,total_votes\n";
        for (const auto& r : data.outcomes.rows)
            f << r.state << ',' << (r.winner == Party::Dem ? "DEM" : "REP") << ',' << r.margin_votes << ','
              << r.total_votes.value_or(0) << '\n';
    }
    return files;
}

}  // namespace hpm::fixtures
