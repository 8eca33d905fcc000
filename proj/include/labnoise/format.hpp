#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace labnoise {

// Shortest-safe round-trip text for a double ("%.17g").
std::string format_double(double value);

// Splits one CSV line on commas. Fields are never quoted in the files this
// library writes.
std::vector<std::string> split_csv_line(std::string_view line);

// Strict numeric parsing; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace labnoise
