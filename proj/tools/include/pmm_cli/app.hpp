#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pmm/error.hpp"

namespace pmm::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kInternalError = 2 };

// A required input produced by an earlier pipeline step is absent.
class MissingArtifact : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Runs one `pmm` invocation (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pmm::cli
