#include "hpm/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace hpm {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

int parse_int_field(std::string_view s, std::string_view what)
{
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::invalid_argument("bad " + std::string(what) + " '" + std::string(s) + "'");
    return v;
}

double parse_double_field(std::string_view s, std::string_view what)
{
    std::string tmp(s);
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(tmp, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != tmp.size() || !std::isfinite(v))
        throw std::invalid_argument("bad " + std::string(what) + " '" + tmp + "'");
    return v;
}

std::string parse_state(std::string_view s)
{
    if (s.size() != 2 || !std::isupper(static_cast<unsigned char>(s[0])) ||
        !std::isupper(static_cast<unsigned char>(s[1])))
        throw std::invalid_argument("bad state code '" + std::string(s) + "'");
    return std::string(s);
}

/// Reads a CSV with an exact header. Calls row(fields, line_no) for every non-empty data line.
template <typename RowFn>
void read_csv(std::istream& in, const std::string& name, std::vector<std::string_view> accepted_headers,
              RowFn&& row)
{
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto view = trim(line);
        if (view.empty()) continue;
        if (!have_header) {
            auto it = std::find(accepted_headers.begin(), accepted_headers.end(), view);
            if (it == accepted_headers.end())
                throw IngestError(name, line_no,
                                  "header mismatch: expected '" + std::string(accepted_headers.front()) +
                                      "', got '" + std::string(view) + "'");
            columns = split_csv(view).size();
            have_header = true;
            continue;
        }
        auto fields = split_csv(view);
        if (fields.size() != columns)
            throw IngestError(name, line_no,
                              "expected " + std::to_string(columns) + " columns, got " +
                                  std::to_string(fields.size()));
        try {
            row(fields, line_no);
        } catch (const IngestError&) {
            throw;
        } catch (const std::exception& e) {
            throw IngestError(name, line_no, e.what());
        }
    }
    if (!have_header) throw IngestError(name, line_no, "missing header");
}

std::ifstream open_or_throw(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IngestError(path.string(), 0, "cannot open file");
    return in;
}

}  // namespace

Date Date::parse(std::string_view iso)
{
    using namespace std::chrono;
    iso = trim(iso);
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        throw std::invalid_argument("bad date '" + std::string(iso) + "'");
    int y = parse_int_field(iso.substr(0, 4), "year");
    int m = parse_int_field(iso.substr(5, 2), "month");
    int d = parse_int_field(iso.substr(8, 2), "day");
    year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw std::invalid_argument("bad date '" + std::string(iso) + "'");
    return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

std::string Date::to_string() const
{
    using namespace std::chrono;
    year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

Mills dollars_to_mills(std::string_view decimal)
{
    decimal = trim(decimal);
    if (decimal.empty()) throw std::invalid_argument("empty price");
    if (decimal.front() == '-') throw std::invalid_argument("negative price '" + std::string(decimal) + "'");
    if (decimal.front() == '+') decimal.remove_prefix(1);
    auto dot = decimal.find('.');
    std::string_view whole = decimal.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : decimal.substr(dot + 1);
    auto all_digits = [](std::string_view s) {
        return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if ((whole.empty() && frac.empty()) || !all_digits(whole) || !all_digits(frac) || whole.size() > 6)
        throw std::invalid_argument("bad price '" + std::string(decimal) + "'");
    std::int64_t mills = 0;
    for (char c : whole) mills = mills * 10 + (c - '0');
    mills *= kMillsPerDollar;
    std::int64_t scale = 100;
    for (std::size_t i = 0; i < frac.size() && i < 3; ++i, scale /= 10) mills += (frac[i] - '0') * scale;
    if (frac.size() > 3 && frac[3] >= '5') mills += 1;
    return static_cast<Mills>(mills);
}

IngestError::IngestError(std::string file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(std::move(file)), line_(line)
{
}

std::optional<double> OutcomeRow::margin_share() const
{
    if (!total_votes || *total_votes <= 0) return std::nullopt;
    return static_cast<double>(margin_votes) / static_cast<double>(*total_votes);
}

const OutcomeRow& OutcomeTable::at(std::string_view state) const
{
    for (const auto& row : rows)
        if (row.state == state) return row;
    throw std::out_of_range("unknown state '" + std::string(state) + "'");
}

bool OutcomeTable::contains(std::string_view state) const
{
    return std::any_of(rows.begin(), rows.end(), [&](const OutcomeRow& r) { return r.state == state; });
}

std::size_t AlignedPanel::state_index(std::string_view state) const
{
    auto it = std::lower_bound(states.begin(), states.end(), state);
    if (it == states.end() || *it != state) throw std::out_of_range("state not in panel: " + std::string(state));
    return static_cast<std::size_t>(it - states.begin());
}

std::size_t AlignedPanel::date_index(Date date) const
{
    auto it = std::lower_bound(dates.begin(), dates.end(), date);
    if (it == dates.end() || *it != date) throw std::out_of_range("date not in panel: " + date.to_string());
    return static_cast<std::size_t>(it - dates.begin());
}

ForecastPanel parse_model_csv(std::istream& in, const std::string& name)
{
    ForecastPanel panel;
    std::set<std::pair<Date, std::string>> seen;
    read_csv(in, name, {"date,state,p_dem"}, [&](const auto& f, std::size_t line) {
        ForecastEntry e{Date::parse(f[0]), parse_state(f[1]), parse_double_field(f[2], "probability")};
        if (e.p < 0.0 || e.p > 1.0)
            throw IngestError(name, line, "probability " + std::string(f[2]) + " outside [0,1]");
        if (!seen.emplace(e.date, e.state).second)
            throw IngestError(name, line, "duplicate (date,state) " + e.date.to_string() + "," + e.state);
        panel.entries.push_back(std::move(e));
    });
    return panel;
}

PricePanel parse_market_csv(std::istream& in, const std::string& name)
{
    PricePanel panel;
    std::set<std::pair<Date, std::string>> seen;
    read_csv(in, name, {"date,state,dem_yes,rep_yes"}, [&](const auto& f, std::size_t line) {
        PriceEntry e{Date::parse(f[0]), parse_state(f[1]), dollars_to_mills(f[2]), dollars_to_mills(f[3])};
        for (Mills m : {e.dem_yes, e.rep_yes})
            if (m <= 0 || m >= kMillsPerDollar)
                throw IngestError(name, line, "price outside (0,1): " + std::to_string(mills_to_dollars(m)));
        if (!seen.emplace(e.date, e.state).second)
            throw IngestError(name, line, "duplicate (date,state) " + e.date.to_string() + "," + e.state);
        panel.entries.push_back(std::move(e));
    });
    return panel;
}

OutcomeTable parse_outcomes_csv(std::istream& in, const std::string& name)
{
    OutcomeTable table;
    std::set<std::string> seen;
    read_csv(in, name, {"state,winner,margin_votes", "state,winner,margin_votes,total_votes"},
             [&](const auto& f, std::size_t line) {
                 OutcomeRow row;
                 row.state = parse_state(f[0]);
                 if (f[1] == "DEM")
                     row.winner = Party::Dem;
                 else if (f[1] == "REP")
                     row.winner = Party::Rep;
                 else
                     throw IngestError(name, line, "winner must be DEM or REP, got '" + std::string(f[1]) + "'");
                 std::int64_t margin = 0;
                 auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), margin);
                 if (ec != std::errc{} || p != f[2].data() + f[2].size() || margin < 0)
                     throw IngestError(name, line, "bad margin_votes '" + std::string(f[2]) + "'");
                 row.margin_votes = margin;
                 if (f.size() == 4) {
                     std::int64_t total = 0;
                     auto [q, ec2] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), total);
                     if (ec2 != std::errc{} || q != f[3].data() + f[3].size() || total < margin)
                         throw IngestError(name, line, "bad total_votes '" + std::string(f[3]) + "'");
                     row.total_votes = total;
                 }
                 if (!seen.insert(row.state).second)
                     throw IngestError(name, line, "duplicate state " + row.state);
                 table.rows.push_back(std::move(row));
             });
    return table;
}

ForecastPanel parse_model_csv(const std::filesystem::path& path)
{
    auto in = open_or_throw(path);
    return parse_model_csv(in, path.string());
}

PricePanel parse_market_csv(const std::filesystem::path& path)
{
    auto in = open_or_throw(path);
    return parse_market_csv(in, path.string());
}

OutcomeTable parse_outcomes_csv(const std::filesystem::path& path)
{
    auto in = open_or_throw(path);
    return parse_outcomes_csv(in, path.string());
}

double normalize_pair(double dem_yes, double rep_yes)
{
    double sum = dem_yes + rep_yes;
    if (!(sum > 0.0) || dem_yes < 0.0 || rep_yes < 0.0)
        throw std::invalid_argument("normalize_pair: prices must be non-negative with positive sum");
    return dem_yes / sum;
}

namespace {

std::string describe_gaps(const std::vector<AlignmentError::Gap>& gaps)
{
    std::ostringstream os;
    os << "panel is not rectangular; " << gaps.size() << " gap(s):";
    std::size_t shown = 0;
    for (const auto& g : gaps) {
        if (shown++ == 20) {
            os << " ...";
            break;
        }
        os << " (" << g.date.to_string() << "," << g.state << " missing in "
           << (g.missing_in_model ? "model" : "market") << ")";
    }
    return os.str();
}

}  // namespace

AlignmentError::AlignmentError(std::vector<Gap> gaps)
    : std::runtime_error(describe_gaps(gaps)), gaps_(std::move(gaps))
{
}

AlignedPanel align(const ForecastPanel& model, const PricePanel& market, const OutcomeTable& outcomes)
{
    AlignedPanel panel;
    if (model.entries.empty() || market.entries.empty()) return panel;

    auto [mlo, mhi] = std::minmax_element(model.entries.begin(), model.entries.end(),
                                          [](const auto& a, const auto& b) { return a.date < b.date; });
    auto [klo, khi] = std::minmax_element(market.entries.begin(), market.entries.end(),
                                          [](const auto& a, const auto& b) { return a.date < b.date; });
    const Date first = std::max(mlo->date, klo->date);
    const Date last = std::min(mhi->date, khi->date);
    auto in_window = [&](Date d) { return first <= d && d <= last; };

    std::map<std::pair<Date, std::string>, const ForecastEntry*> m;
    std::map<std::pair<Date, std::string>, const PriceEntry*> k;
    std::set<Date> dates;
    std::set<std::string> states;
    for (const auto& e : model.entries) {
        if (!in_window(e.date)) continue;
        m.emplace(std::pair{e.date, e.state}, &e);
        dates.insert(e.date);
        states.insert(e.state);
    }
    for (const auto& e : market.entries) {
        if (!in_window(e.date)) continue;
        k.emplace(std::pair{e.date, e.state}, &e);
        dates.insert(e.date);
        states.insert(e.state);
    }

    for (const auto& s : states)
        if (!outcomes.contains(s)) throw std::invalid_argument("state " + s + " has no row in outcomes");

    std::vector<AlignmentError::Gap> gaps;
    for (Date d : dates)
        for (const auto& s : states) {
            bool in_m = m.count({d, s}) != 0;
            bool in_k = k.count({d, s}) != 0;
            if (!in_m) gaps.push_back({d, s, true});
            if (!in_k) gaps.push_back({d, s, false});
        }
    if (!gaps.empty()) throw AlignmentError(std::move(gaps));

    panel.states.assign(states.begin(), states.end());
    panel.dates.assign(dates.begin(), dates.end());
    const auto T = static_cast<Eigen::Index>(panel.dates.size());
    const auto n = static_cast<Eigen::Index>(panel.states.size());
    panel.p_model.resize(T, n);
    panel.p_market.resize(T, n);
    panel.dem_yes.resize(T, n);
    panel.rep_yes.resize(T, n);
    panel.r.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = panel.states[static_cast<std::size_t>(j)];
        panel.r(j) = outcomes.at(s).winner == Party::Dem ? 1.0 : 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
            const Date d = panel.dates[static_cast<std::size_t>(t)];
            const auto* fe = m.at({d, s});
            const auto* pe = k.at({d, s});
            panel.p_model(t, j) = fe->p;
            panel.dem_yes(t, j) = pe->dem_yes;
            panel.rep_yes(t, j) = pe->rep_yes;
            panel.p_market(t, j) = normalize_pair(pe->dem_yes, pe->rep_yes);
        }
    }
    return panel;
}

}  // namespace hpm
