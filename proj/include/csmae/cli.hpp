#pragma once

#include <ostream>

namespace csmae {

// The csmae command line. Returns the process exit code: 0 success, 2 config or
// usage error, 3 I/O error, 4 corrupt artifact, 1 any other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csmae
