#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ddlab {

/// Shortest decimal that parses back to exactly `v`.
std::string format_real(double v);

/// Fixed-point with `digits` decimals, for human-facing output.
std::string format_fixed(double v, int digits);

/// Strict parse of a whole field; throws std::invalid_argument.
double parse_real(std::string_view text);
unsigned long long parse_unsigned(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text_file(const std::string& path);

}  // namespace ddlab
