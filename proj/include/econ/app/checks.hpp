#pragma once

#include <functional>
#include <string>
#include <vector>

namespace econ {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct CheckOptions {
  // Root holding games/ and prompts/.
  std::string data_dir;
  // Runs of the determinism check write here.
  std::string scratch_dir;
};

inline constexpr int kCheckCount = 10;

// One acceptance check by number (1..kCheckCount). Exceptions are caught and
// reported as a failure.
CheckResult run_check(int id, const CheckOptions& opt);

std::vector<CheckResult> run_acceptance_checks(const CheckOptions& opt,
                                               const std::function<void(const CheckResult&)>& on_result = {});

// "PASS 3 bne-convergence (1.2s): detail"
std::string format_result(const CheckResult& r);

}  // namespace econ
