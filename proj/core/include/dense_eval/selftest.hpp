#pragma once

#include <string>
#include <vector>

namespace dense_eval {

struct SelfTestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Built-in invariant checks (similarity oracles, reciprocal-rank oracle,
/// InfoNCE closed forms). Deterministic; needs no input files.
std::vector<SelfTestCheck> run_selftest();

}  // namespace dense_eval
