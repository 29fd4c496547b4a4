// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace structchem {

/// Entry point of the `structchem` tool. `args` excludes the program name.
/// Returns the process exit status: 0 success, 1 runtime failure, 2 usage error.
int cli_main(std::vector<std::string> const& args, std::ostream& out, std::ostream& err);

} // namespace structchem
