#pragma once

#include <iosfwd>

namespace sempos {

// Subcommands: gen-data, train, eval, caption, ablate, pos-stats, gradcheck.
// Returns 0 on success, 2 on a usage error and 1 on any other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sempos
