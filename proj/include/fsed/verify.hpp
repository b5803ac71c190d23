#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsed {

struct VerifyOptions {
    std::uint64_t seed = 7;
    /// Test hook: added to one entry of every analytic gradient before the
    /// comparison, so the gradient suite can be shown to catch a wrong
    /// implementation. Zero in normal operation.
    double gradient_perturbation = 0.0;
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Built-in oracle suites: analytic-vs-finite-difference gradient checks over
/// every model/kernel/loss configuration, brute-force matching equivalence,
/// kernel identities and the metric fixtures.
std::vector<SuiteResult> run_verification(const VerifyOptions& options);

}  // namespace fsed
