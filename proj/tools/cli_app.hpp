#pragma once

#include <string>
#include <vector>

namespace vida {

// Entry point of the command-line tool; returns the process exit code.
// args[0] is the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace vida
