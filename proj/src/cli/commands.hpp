#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfpl::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kIoError = 1;
inline constexpr int kValidation = 2;
inline constexpr int kIdentifiability = 3;
inline constexpr int kNotConverged = 4;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfpl::cli
