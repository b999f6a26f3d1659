#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace qk::cli {

/// Runs one `qk` invocation. `args` excludes the program name. Returns the
/// process exit code: 0 success, 1 failed check or runtime error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Seed used when no --seed flag is given: QK_SEED if set, else 0.
std::uint64_t default_seed();

/// Property suites behind `qk verify`. Prints one PASS/FAIL line per
/// property to `out`; returns true if all passed.
bool run_verify_suite(const std::string& suite, std::uint64_t seed, std::ostream& out);

}  // namespace qk::cli
