#pragma once

// Scenario-level verification checks: each one measures a quantity, compares it
// against a pinned tolerance, and reports pass/fail.  The CLI's `verify` command
// and the acceptance harness share these implementations.
//
// Check selection is scenario-appropriate: the closed-form checks (profile
// constants, perturbed-constant identity, distortion inequalities, kernel
// integrals) always run; scenarios with a closed-form oracle add the coupling
// contraction, gradient-field, HJB-residual and transport-map checks; scenarios
// without one add the Hessian-envelope and Lipschitz-bound domination checks.
//
// When an artifact directory is set, every intermediate report is written there
// (CSV/JSON, formatting pinned), plus a summary.json.  Artifacts contain no
// timing and no paths, so repeated runs are byte-identical; wall-clock seconds
// are returned in-memory only.

#include <string>
#include <vector>

#include <json.hpp>

#include "clab/scenarios.hpp"

namespace clab {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;  // the worst observed value
    double tolerance = 0.0; // pass requires measured <= tolerance
    std::string detail;
    double seconds = 0.0;   // wall time; never written to artifacts
};

struct VerifySummary {
    std::vector<CheckResult> checks;
    bool all_pass() const;
    nlohmann::json to_json() const; // excludes seconds (byte-stable artifacts)
};

struct VerifyOptions {
    std::string artifact_dir; // empty: verify in memory only

    // Monte Carlo budgets.  Checks whose criteria pin a budget default to the
    // pinned value; the scale factor lets callers trade confidence for speed
    // (tolerances that depend on standard errors widen automatically).
    std::int64_t coupling_paths = 100000; // contraction check
    std::int64_t gradient_paths = 100000; // gradient-field check
    std::int64_t hjb_paths = 50000;       // Monte Carlo HJB residual
    std::int64_t hess_paths = 20000;      // Hessian Rayleigh-quotient check
    std::int64_t frozen_paths = 20000;    // frozen-field transport (oracle scenarios)
    std::int64_t frozen_paths_generic = 3000; // frozen-field transport (no oracle)
    std::int64_t pushforward_samples = 10000;
    double quad_tol = 1e-10;

    // applied multiplicatively to every budget above (>= 1 path is kept)
    double budget_scale = 1.0;
};

VerifySummary run_verification(const Scenario& sc, const VerifyOptions& opts = {});

} // namespace clab
