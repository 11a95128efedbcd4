#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpm {

/// Calendar day, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;

    static Date parse(std::string_view iso);  // YYYY-MM-DD, throws std::invalid_argument
    std::string to_string() const;

    auto operator<=>(const Date&) const = default;
};

enum class Party { Dem, Rep };

/// Prices are kept as integer tenths of a cent so accounting stays exact.
using Mills = std::int32_t;
inline constexpr Mills kMillsPerDollar = 1000;

inline double mills_to_dollars(Mills m) { return static_cast<double>(m) / kMillsPerDollar; }
Mills dollars_to_mills(std::string_view decimal);  // exact decimal parse, rounds beyond 3 places

/// Raised for malformed input files; carries the offending file and line.
class IngestError : public std::runtime_error {
public:
    IngestError(std::string file, std::size_t line, const std::string& what);

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

struct ForecastEntry {
    Date date;
    std::string state;
    double p = 0.0;
};

struct ForecastPanel {
    std::vector<ForecastEntry> entries;
};

struct PriceEntry {
    Date date;
    std::string state;
    Mills dem_yes = 0;
    Mills rep_yes = 0;
};

struct PricePanel {
    std::vector<PriceEntry> entries;
};

struct OutcomeRow {
    std::string state;
    Party winner = Party::Dem;
    std::int64_t margin_votes = 0;
    std::optional<std::int64_t> total_votes;  // optional 4th column

    /// Margin as a fraction of total votes, when known.
    std::optional<double> margin_share() const;
};

struct OutcomeTable {
    std::vector<OutcomeRow> rows;

    const OutcomeRow& at(std::string_view state) const;
    bool contains(std::string_view state) const;
};

/// Rectangular states x dates panel. Matrices are indexed (date, state).
struct AlignedPanel {
    std::vector<std::string> states;  // sorted
    std::vector<Date> dates;          // sorted ascending
    Eigen::MatrixXd p_model;
    Eigen::MatrixXd p_market;
    Eigen::Matrix<Mills, Eigen::Dynamic, Eigen::Dynamic> dem_yes;
    Eigen::Matrix<Mills, Eigen::Dynamic, Eigen::Dynamic> rep_yes;
    Eigen::VectorXd r;  // per state, 1 when the Democrat won

    std::size_t n_states() const { return states.size(); }
    std::size_t n_days() const { return dates.size(); }
    bool empty() const { return states.empty() || dates.empty(); }

    std::size_t state_index(std::string_view state) const;  // throws std::out_of_range
    std::size_t date_index(Date date) const;
};

ForecastPanel parse_model_csv(const std::filesystem::path& path);
PricePanel parse_market_csv(const std::filesystem::path& path);
OutcomeTable parse_outcomes_csv(const std::filesystem::path& path);

// Stream variants; `name` is used in error messages.
ForecastPanel parse_model_csv(std::istream& in, const std::string& name);
PricePanel parse_market_csv(std::istream& in, const std::string& name);
OutcomeTable parse_outcomes_csv(std::istream& in, const std::string& name);

/// dem / (dem + rep). Throws std::invalid_argument when the sum is not positive.
double normalize_pair(double dem_yes, double rep_yes);

/// Raised by align() when the two sources are not rectangular over their common window.
class AlignmentError : public std::runtime_error {
public:
    struct Gap {
        Date date;
        std::string state;
        bool missing_in_model = false;  // otherwise missing in market
    };

    explicit AlignmentError(std::vector<Gap> gaps);
    const std::vector<Gap>& gaps() const noexcept { return gaps_; }

private:
    std::vector<Gap> gaps_;
};

AlignedPanel align(const ForecastPanel& model, const PricePanel& market, const OutcomeTable& outcomes);

}  // namespace hpm
