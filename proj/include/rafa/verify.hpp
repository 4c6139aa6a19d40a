#pragma once

#include <string>
#include <vector>

namespace rafa {

struct VerifyResult {
    std::string name; // module.check, machine-greppable
    bool pass = false;
    double slack = 0.0; // measured margin to the bound; negative means violated
    std::string detail;
};

/**
 * Runs the named property suites (posterior closed forms, planner horizon
 * bound, switch-count law, regularity coefficient, norm/determinant bound,
 * variance contraction, gain chain, planner oracles, replay). `only` filters
 * by name prefix; `inject_fault` perturbs the named computation so a check's
 * teeth can be demonstrated.
 */
std::vector<VerifyResult> run_verification(const std::string& only = "",
                                           const std::string& inject_fault = "");

} // namespace rafa
