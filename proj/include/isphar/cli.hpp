#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace isphar {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBudget = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFailure = 3;

// argv[0] is the program name. Returns the process exit status.
int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace isphar
