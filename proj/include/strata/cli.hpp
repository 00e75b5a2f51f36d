// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace strata {

/// Runs one `strata` subcommand. args excludes the program name.
/// Returns 0 on success, 1 on a validation error, 2 on an internal error.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace strata
