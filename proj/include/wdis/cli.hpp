#pragma once

#include <iosfwd>

namespace wdis {

// Exit codes: 0 success, 1 unexpected failure, 2 config error, 3 data error,
// 4 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wdis
