#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sbo {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast randomized property checks over transforms, projections, the GP and
/// the acquisition gradients. Backs the `verify` subcommand.
std::vector<CheckResult> run_self_checks(std::uint64_t seed, int instances = 20);

}  // namespace sbo
