#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace labnoise::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `labnoise` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

// "a:b:step" (inclusive, rounded to 12 decimals), "x,y,z", "x" or "" (empty).
std::vector<double> parse_grid(std::string_view text);

}  // namespace labnoise::cli
