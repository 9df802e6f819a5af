#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tokprune::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInputError = 2;
inline constexpr int kModelError = 3;
inline constexpr int kLabelError = 4;

// args[0] is the program name. JSON results go to `out` (or --out), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tokprune::cli
