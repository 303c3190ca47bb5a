#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tmagent::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDomainFailure = 2 };

/// Whole command line surface; streams are injectable so tests can drive it
/// in-process.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace tmagent::cli
