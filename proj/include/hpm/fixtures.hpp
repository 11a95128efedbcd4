#pragma once

#include "hpm/data_ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace hpm::fixtures {

struct SyntheticSpec {
    std::uint64_t seed = 1;
    int states = 6;
    int days = 30;
    Date start = Date::parse("2020-10-01");
};

struct SyntheticData {
    ForecastPanel model;
    PricePanel market;
    OutcomeTable outcomes;
};

/// Deterministic random panel: each state has a latent win probability, the model and the
/// market follow noisy walks around it, and the outcome is drawn from it. The same spec
/// produces the same data on every platform.
SyntheticData generate(const SyntheticSpec& spec);

struct FixtureFiles {
    std::filesystem::path model;
    std::filesystem::path market;
    std::filesystem::path outcomes;
};

/// Writes model.csv, market.csv and outcomes.csv into dir in the ingest formats.
FixtureFiles write(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace hpm::fixtures
