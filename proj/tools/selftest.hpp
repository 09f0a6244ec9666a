#pragma once

#include <ostream>

namespace proma {

// Runs the oracle and property checks behind the `selftest` subcommand,
// printing one line per check. Returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace proma
