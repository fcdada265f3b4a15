#pragma once

#include <ostream>

namespace segvit {

// Runs the `segvit` command line. Returns the process exit code.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace segvit
