#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "macr/backend.hpp"

namespace macr::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kPipeline = 2,
  kValidation = 3,
};

// Filled in by run() so callers can check what the backend did.
struct RunTrace {
  bool backend_created = false;
  BackendStats stats;
  bool network_transport = false;
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, RunTrace* trace = nullptr);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, RunTrace* trace = nullptr);

}  // namespace macr::cli
