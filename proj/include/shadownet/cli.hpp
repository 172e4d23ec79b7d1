#pragma once

#include <string>
#include <vector>

namespace shadownet {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 ok, 1 error, 2 warning-level (a rewrite selector matched nothing).
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

} // namespace shadownet
