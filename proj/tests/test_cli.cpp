#include "cli.hpp"

#include "hpm/backtest.hpp"
#include "hpm/fixtures.hpp"
#include "hpm/maker_bot.hpp"
#include "hpm/reports.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = hpm::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        std::random_device rd;
        path = fs::temp_directory_path() / ("hpm_cli_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("amount and list parsing")
{
    CHECK(hpm::cli::parse_cents("986.08") == 98608);
    CHECK(hpm::cli::parse_cents("1000") == 100000);
    CHECK(hpm::cli::parse_cents("0.5") == 50);
    CHECK_THROWS(hpm::cli::parse_cents("1.005"));
    CHECK_THROWS(hpm::cli::parse_cents("ten"));
    CHECK(hpm::cli::parse_list("0.3,0.5,0.2") == std::vector<double>{0.3, 0.5, 0.2});
    CHECK_THROWS(hpm::cli::parse_list("0.3,,0.2"));
    CHECK_THROWS(hpm::cli::parse_list("0.3,x"));
}

TEST_CASE("quotes prints the first ladder")
{
    const auto r = run({"quotes", "--beliefs", "0.3,0.5,0.2", "--cash", "1000"});
    CHECK(r.code == 0);
    CHECK(r.out ==
          "Bin | Bid Price  Bid Quantity  Ask Price  Ask Quantity \n"
          "1   | 0.29       48            0.31       46           \n"
          "2   | 0.49       40            0.51       40           \n"
          "3   | 0.19       64            0.21       60           \n");
}

TEST_CASE("quotes after the fill matches the library")
{
    const auto r = run({"quotes", "--beliefs", "0.3,0.5,0.2", "--cash", "986.08", "--holdings", "48,0,0", "--json"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    hpm::bot::BotState s;
    s.beliefs = Eigen::Vector3d(0.3, 0.5, 0.2);
    s.cash = 98608;
    s.holdings = {48, 0, 0};
    CHECK(j["quotes"] == hpm::bot::to_json(hpm::bot::quote_set(s)));
    CHECK(j["quotes"][0]["bid"]["price_cents"] == 28);
    CHECK(j["quotes"][0]["bid"]["qty"] == 51);
    CHECK(j["quotes"][0]["ask"]["price_cents"] == 30);
}

TEST_CASE("quotes with more risk aversion are smaller")
{
    const auto log_q = json::parse(run({"quotes", "--beliefs", "0.3,0.5,0.2", "--json"}).out);
    const auto rho2 = json::parse(run({"quotes", "--beliefs", "0.3,0.5,0.2", "--rho", "2", "--json"}).out);
    for (int i = 0; i < 3; ++i) {
        CHECK(rho2["quotes"][i]["bid"]["qty"].get<int>() < log_q["quotes"][i]["bid"]["qty"].get<int>());
        CHECK(rho2["quotes"][i]["ask"]["qty"].get<int>() < log_q["quotes"][i]["ask"]["qty"].get<int>());
    }
}

TEST_CASE("bad input exits nonzero")
{
    CHECK(run({}).code != 0);
    CHECK(run({"launch"}).code != 0);
    CHECK(run({"quotes"}).code != 0);
    CHECK(run({"quotes", "--beliefs", "0.3,0.5,0.2", "--bogus"}).code != 0);
    CHECK(run({"quotes", "--beliefs", "0.6,0.6"}).code != 0);
    CHECK(run({"quotes", "--beliefs", "0.5,0.5", "--cash", "1.001"}).code != 0);
    CHECK(run({"quotes", "--beliefs", "0.5,0.5", "--holdings", "1.5,0"}).code != 0);
    CHECK(run({"quotes", "--beliefs", "1.0"}).code != 0);
    CHECK(run({"backtest", "--rho", "-1", "--seed", "1"}).code != 0);
    CHECK(run({"score"}).code != 0);
    TempDir dir;
    const auto r = run({"score", "--model", "/nonexistent/model.csv", "--market", "x", "--outcomes", "y", "--out",
                        (dir.path / "o").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("error") != std::string::npos);
    CHECK(run({"serve", "--port", "0", "--exit-after-ms", "1"}).code != 0);  // no admin token
}

TEST_CASE("score on a synthetic fixture matches the library")
{
    TempDir dir;
    const auto out = dir.path / "score";
    const auto r = run({"score", "--seed", "5", "--states", "4", "--days", "12", "--out", out.string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "calibration.csv"));

    const auto files = hpm::fixtures::write(hpm::fixtures::generate({5, 4, 12}), dir.path / "lib");
    const auto outcomes = hpm::parse_outcomes_csv(files.outcomes);
    const auto panel = hpm::align(hpm::parse_model_csv(files.model), hpm::parse_market_csv(files.market), outcomes);
    const auto report = hpm::reports::score(panel, {});
    CHECK(slurp(out / "score.json") == hpm::reports::to_json(report).dump(2) + "\n");
    CHECK(slurp(out / "daily_brier.csv") == hpm::reports::daily_csv(report));

    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["command"] == "score");
    CHECK(manifest["outputs"].size() == 5);
}

TEST_CASE("backtest on a synthetic fixture matches the library and reruns byte for byte")
{
    TempDir dir;
    const auto a = dir.path / "a";
    const std::vector<std::string> args{"backtest", "--seed", "9", "--states", "5", "--days", "10", "--robustness",
                                        "--out", a.string()};
    const auto r = run(args);
    REQUIRE(r.code == 0);

    const auto files = hpm::fixtures::write(hpm::fixtures::generate({9, 5, 10}), dir.path / "lib");
    const auto outcomes = hpm::parse_outcomes_csv(files.outcomes);
    const auto panel = hpm::align(hpm::parse_model_csv(files.model), hpm::parse_market_csv(files.market), outcomes);
    const auto report = hpm::backtest::run_panel(panel, {});
    CHECK(slurp(a / "table1.csv") == hpm::reports::table1_csv(report));
    CHECK(r.out.find(hpm::reports::table1_text(report)) == 0);
    CHECK(r.out.find("robustness diameter") != std::string::npos);

    std::map<std::string, std::string> first;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) first[fs::relative(e.path(), a).generic_string()] = slurp(e.path());
    fs::remove_all(a);
    REQUIRE(run(args).code == 0);
    std::map<std::string, std::string> second;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) second[fs::relative(e.path(), a).generic_string()] = slurp(e.path());
    CHECK(first.size() >= 5);
    CHECK(first == second);
}

TEST_CASE("backtest flips and rho")
{
    TempDir dir;
    const auto states = json::parse(
        [&] {
            const auto f = hpm::fixtures::write(hpm::fixtures::generate({3, 4, 8}), dir.path / "lib");
            std::ifstream in(f.outcomes);
            std::string header, line;
            std::getline(in, header);
            json names = json::array();
            while (std::getline(in, line)) names.push_back(line.substr(0, line.find(',')));
            return names.dump();
        }());
    REQUIRE(states.size() == 4);
    const auto s0 = states[0].get<std::string>();
    const auto s1 = states[1].get<std::string>();
    const auto r = run({"backtest", "--seed", "3", "--states", "4", "--days", "8", "--flip", s0, "--flip",
                        s0 + "," + s1, "--out", (dir.path / "f").string()});
    REQUIRE(r.code == 0);
    const auto flips = json::parse(slurp(dir.path / "f" / "flips.json"));
    CHECK(flips.size() == 2);

    const auto log_run = json::parse(
        (run({"backtest", "--seed", "3", "--states", "4", "--days", "8", "--out", (dir.path / "l").string()}),
         slurp(dir.path / "l" / "backtest.json")));
    const auto rho2 = json::parse(
        (run({"backtest", "--seed", "3", "--states", "4", "--days", "8", "--rho", "2", "--out",
              (dir.path / "r").string()}),
         slurp(dir.path / "r" / "backtest.json")));
    CHECK(log_run != rho2);
    CHECK(run({"backtest", "--seed", "3", "--flip", "ZZ", "--out", (dir.path / "z").string()}).code != 0);
    CHECK(run({"backtest", "--seed", "3", "--threshold", "0.01", "--out", (dir.path / "t").string()}).code != 0);
}

TEST_CASE("serve starts and stops")
{
    TempDir dir;
    const auto r = run({"serve", "--port", "0", "--admin-token", "t", "--demo", "--exit-after-ms", "100", "--journal",
                        (dir.path / "j.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("listening on 127.0.0.1:") == 0);
    CHECK(r.out.find("journal entries 1") != std::string::npos);
    // Restart replays the demo market instead of creating a second one.
    const auto again = run({"serve", "--port", "0", "--admin-token", "t", "--demo", "--exit-after-ms", "50",
                            "--journal", (dir.path / "j.jsonl").string()});
    CHECK(again.out.find("journal entries 1") != std::string::npos);
}
