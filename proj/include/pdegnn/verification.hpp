#pragma once

// Property checks comparing the production operators and blocks against the
// dense oracle. Shared by the acceptance binary and `pdegnn verify`.

#include <cstdint>
#include <string>
#include <vector>

namespace pdegnn::oracle {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

struct VerifyOptions {
  /// Deliberately negates h inside the production advection step. The
  /// checks must notice; used to prove they are not vacuous.
  bool flip_advection_sign = false;
  int conservation_graphs = 200;  ///< per conserving block kind
  int oracle_trials = 500;        ///< per block kind
  std::uint64_t seed = 2024;
};

/// Per-channel node sums stay fixed through 1..64 layers (|drift| <= 1e-9).
CheckResult check_conservation(const VerifyOptions& opt);
/// Sparse forward equals the dense oracle (relative error <= 1e-10).
CheckResult check_oracle_equivalence(const VerifyOptions& opt);
/// Reverse-mode gradients match central differences (relative error <= 1e-4).
CheckResult check_gradients(const VerifyOptions& opt);
/// Mixing blocks with alpha clamped to 1 or 0 equal their pure counterparts exactly.
CheckResult check_reductions(const VerifyOptions& opt);
/// The mixed advection-wave update satisfies its implicit relation (residual <= 1e-10).
CheckResult check_mix_aw_relation(const VerifyOptions& opt);
/// 50 GCN layers collapse features; 50 advection layers do not.
CheckResult check_oversmoothing(const VerifyOptions& opt);
/// Relabelling nodes permutes float32 logits the same way (<= 1e-6).
CheckResult check_equivariance(const VerifyOptions& opt);

std::vector<CheckResult> run_verification(const VerifyOptions& opt);

/// "PASS name (detail)" / "FAIL name (detail)".
std::string format_check(const CheckResult& r);

}  // namespace pdegnn::oracle
