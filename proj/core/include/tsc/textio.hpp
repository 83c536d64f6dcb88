#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tsc {

/// Shortest representation of v that parses back to exactly the same
/// double. All file formats route doubles through this so that
/// serialize/parse round-trips are bit-exact.
std::string format_double(double v);

/// Strict parse; throws std::invalid_argument unless the whole token is a
/// valid floating-point literal.
double parse_double(std::string_view token);

long long parse_long(std::string_view token);

/// Splits on whitespace, skipping repeated separators.
std::vector<std::string> split_ws(std::string_view line);

/// Splits a CSV line on commas (no quoting; none of our fields need it).
std::vector<std::string> split_csv(std::string_view line);

/// Reads a whole file; throws std::runtime_error naming the path on failure.
std::string read_text_file(const std::string& path);

/// Writes text to path, replacing any existing content; throws
/// std::runtime_error naming the path on failure.
void write_text_file(const std::string& path, std::string_view text);

}  // namespace tsc
