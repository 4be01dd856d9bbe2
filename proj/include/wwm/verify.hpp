/**
 * @file verify.hpp
 * @brief Built-in invariant checks behind the `verify` subcommand.
 */
#pragma once

#include <string>
#include <vector>

namespace wwm {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  bool inject_grad_bug = false;  // negative-control fixture
};

/// Runs every check; each maps to an invariant from the module contracts.
std::vector<VerifyCheck> run_verification(const VerifyOptions& opt = {});

}  // namespace wwm
