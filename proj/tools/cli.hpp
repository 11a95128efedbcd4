#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hpm::cli {

/// Runs the hpm command line. args excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a decimal dollar amount into exact cents; throws std::invalid_argument on
/// sub-cent precision or bad syntax.
long long parse_cents(const std::string& dollars);

/// Parses a comma-separated list of numbers.
std::vector<double> parse_list(const std::string& csv);

}  // namespace hpm::cli
