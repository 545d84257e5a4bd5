#ifndef CRASHSTACK_TOOLS_CLI_HPP_
#define CRASHSTACK_TOOLS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace crashstack::cli {

// Entry point shared by the executable and the tests. Returns the process
// exit code: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure, 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crashstack::cli

#endif  // CRASHSTACK_TOOLS_CLI_HPP_
