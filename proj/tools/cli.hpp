#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace skillnet::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skillnet::cli
