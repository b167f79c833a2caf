#ifndef BLINDSIM_TOOLS_CLI_H_
#define BLINDSIM_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace blindsim {

// Exit codes of the blindsim tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs the tool on args (args[0] is the program name).
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blindsim

#endif  // BLINDSIM_TOOLS_CLI_H_
