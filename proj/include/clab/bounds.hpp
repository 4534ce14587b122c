#pragma once

// Closed-form envelopes and Lipschitz constants of the transport machinery:
// the gradient envelope, the three Hessian envelope cases, the integrated
// Lipschitz constants, the comparison constant of Fathi-Mikulincer-Shenfeld,
// and the three kernel integrals, each cross-checked by adaptive quadrature
// against the same q convention the profiles module uses.
//
// Lipschitz constants are tracked in log space: `exponent` is always finite,
// `value = exp(exponent)` may overflow to +inf for strongly non-convex inputs.

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "clab/profiles.hpp"
#include "clab/scenarios.hpp"
#include <json.hpp>

namespace clab {

struct BoundInputs {
    // NaN means "not declared"; each operation validates what its case needs
    double C1W = 0.0;
    double C2U = std::numeric_limits<double>::quiet_NaN();
    double C3U = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double lambda_kU = 0.0, C_kU = 0.0;     // profile constants of kappa_U
    double lambda_kbar = 0.0, C_kbar = 0.0; // profile constants of kappa-bar
    AssumptionMode mode = AssumptionMode::A1A2prime;
};

// pulls C1W and the declared potential constants; profile constants from the two
// ProfileConstants (kappa_U and kappa-bar)
BoundInputs bound_inputs_from(const Scenario& sc, const ProfileConstants& kU,
                              const ProfileConstants& kbar);

enum class HessCase { A2, A2prime, A2primePositiveAlpha };
enum class LipCase { Thm_i, Thm_ii, Eq2 };

std::string to_string(HessCase c);
std::string to_string(LipCase c);
HessCase hess_case_of(AssumptionMode mode);
LipCase lip_case_of(AssumptionMode mode);

// sup|grad phi_t|: generic C_kU^{-1} e^{-lambda_kU (T-t)} C1W, or e^{-alpha (T-t)} C1W
// in the uniformly convex mode
double gradient_envelope(const BoundInputs& in, double t, double T);

// sup|<u, Hess phi_t u>| envelope for time-to-go T - t (infinite at T - t = 0
// through the q kernel; integrable)
double hessian_envelope(const BoundInputs& in, double t, double T, HessCase c);

struct LipschitzResult {
    LipCase case_used = LipCase::Eq2;
    double exponent = 0.0;       // closed-form bound on int_0^inf hessian_envelope dt
    double value = 1.0;          // exp(exponent); +inf if it overflows
    double quad_exponent = 0.0;  // the integral by adaptive quadrature
    double residual = 0.0;       // exponent - quad_exponent; must be >= -tolerance
    bool consistent = true;      // quad <= closed within slack
};

LipschitzResult lipschitz_bound(const BoundInputs& in, LipCase c);

struct LemmaA1Result {
    // item 1: int_t^T e^{-lambda_kU (T-s)} q_{s-t} ds
    // item 2: int_0^inf e^{-alpha t} q_t dt
    // item 3: int_0^inf q_t dt (closed form is exact)
    double rhs[3] = {0, 0, 0};      // closed forms
    double lhs[3] = {0, 0, 0};      // quadrature
    double residual[3] = {0, 0, 0}; // rhs - lhs
};

LemmaA1Result lemma_a1_integrals(double lambda_kU, double lambda_kbar, double C_kbar,
                                 double alpha, double t, double T);

// exp(10 C1W (1/sqrt(alpha) + C1W/alpha + C3U/alpha^2)): the published comparison
// constant for uniformly convex potentials, reported next to the coupling bound
double fms_comparison(double C1W, double alpha, double C3U);
double fms_comparison_exponent(double C1W, double alpha, double C3U);

// (e^{-a tau} - e^{-b tau})/(b - a) with the analytic limit tau e^{-a tau} at a = b
double exp_diff_quot(double a, double b, double tau);

struct BoundReport {
    BoundInputs inputs;
    std::string hess_case, lip_case;
    LipschitzResult lip;
    // NaN (rendered null) unless alpha > 0 and C3U is declared
    double fms_value = std::numeric_limits<double>::quiet_NaN();
    double fms_exponent = std::numeric_limits<double>::quiet_NaN();
    LemmaA1Result lemma_a1;
    double lemma_alpha_used = 0.0; // alpha if positive, else lambda_kbar
    nlohmann::json to_json() const;
};

BoundReport make_bound_report(const Scenario& sc, const ProfileConstants& kU,
                              const ProfileConstants& kbar);

// header `t,grad_env,hess_env`: one row per time t in ts, envelopes evaluated at
// time-to-go T - t with the case selected by in.mode (hess_env prints inf at t = T)
void write_envelope_csv(std::ostream& out, const BoundInputs& in, const std::vector<double>& ts,
                        double T);

} // namespace clab
