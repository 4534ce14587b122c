#pragma once

// Convexity-profile calculus.
//
// A profile kappa(r) measures the worst-case one-sided monotonicity of a drift at
// separation r.  From an admissible profile (class K: integrable negative part near
// 0, positive liminf at infinity) we build the concave distance distortion f_kappa,
// its contraction rate lambda_kappa and equivalence constant C_kappa:
//
//   phi(r)  = exp( -1/4 \int_0^r s (kappa(s))^- ds )
//   Phi(r)  = \int_0^r phi
//   Z       = \int_0^{R1} Phi/phi,     lambda = 2/Z,     C = phi(R0)/2
//   g(r)    = 1 - ( \int_0^{r ^ R1} Phi/phi ) / (2Z)
//   f(r)    = \int_0^r phi * g
//
//   R0 = inf{ R >= 0 : inf_{r >= R} kappa(r) >= 0 }
//   R1 = inf{ R >= R0 : (inf_{r >= R} kappa(r)) * R * (R - R0) >= 8 }
//
// Everything downstream (coupling envelopes, the kernel q_t, the Lipschitz
// constants) consumes the five scalars and the tabulated f.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clab/interp.hpp"

namespace clab {

struct KReport {
    bool in_class = false;
    double neg_integral = 0.0; // \int_0^1 r (kappa)^- dr
    double r_pos = 0.0;        // from here out kappa stays positive
    std::string reason;        // empty on success
};

class ConvexityProfile {
public:
    enum class Source { AnalyticClosedForm, SampledInfimum, Perturbed };

    ConvexityProfile(std::function<double(double)> eval, Source source, double domain_cap);

    double operator()(double r) const { return eval_(r); }
    Source source() const { return source_; }
    double domain_cap() const { return domain_cap_; }

    // inf_{r in [lo, hi]} kappa(r) by dense scan + golden-section refinement
    double infimum(double lo, double hi) const;

    KReport check_class_k(double quad_tol = 1e-10) const;

private:
    std::function<double(double)> eval_;
    Source source_;
    double domain_cap_;
};

ConvexityProfile constant_profile(double alpha, double domain_cap = 16.0);

// kappa_bar(r) = kappa_U(r) - 4*C1W / (C_kappaU * r); requires C_kappaU in (0,1].
ConvexityProfile perturbed_profile(const ConvexityProfile& kappa_U, double C1W, double C_kappaU);

struct BuildOptions {
    double quad_tol = 1e-10;
    double r1_cap_factor = 1e3;    // R1 search cap = factor * max(1, R0)
    double tail_horizon = 0.0;     // 0 -> automatic (>= domain_cap)
    int tail_scan_points = 4096;
    int table_points = 600;        // approximate node count of the r-grid
};

struct ProfileConstants {
    double R0 = 0.0, R1 = 0.0, Z = 0.0, lambda = 0.0, C = 0.0;
    double table_cap = 0.0;
    bool uniformly_convex_mode = false; // f = Id, C = 1, lambda = alpha

    std::vector<double> r, phi, Phi, g, f, fprime;

    double f_eval(double r) const;      // exact linear extension for r >= table_cap
    double fprime_eval(double r) const;
    double phi_eval(double r) const;
    double Phi_eval(double r) const;
    double g_eval(double r) const;
    double q(double t) const;           // the kernel q_t, see q_kernel below

    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const; // header: r,phi,Phi,g,f,fprime

    MonotoneCubic f_itp, fprime_itp, phi_itp, Phi_itp, g_itp;
};

ProfileConstants build_constants(const ConvexityProfile& profile, const BuildOptions& opts);
ProfileConstants build_constants(const ConvexityProfile& profile, double quad_tol = 1e-10);

// Special mode for uniformly convex profiles kappa >= alpha > 0: the identity
// distortion is admissible and gives the sharper rate (f = Id, C = 1, lambda = alpha).
ProfileConstants uniformly_convex_constants(double alpha, double table_cap = 16.0);

// Kernel bounding P(pair not yet met at t) per unit initial f-distance:
//   q_t = 1 / (2 C sqrt(pi t))                     for t <  1/(2 lambda)
//   q_t = sqrt(lambda/(2 pi)) e^{1/2 - lambda t}/C for t >= 1/(2 lambda)
// Continuous at the branch point; q_0 = +inf (callers integrate, never evaluate at 0).
double q_kernel(double lambda, double C, double t);
double q_kernel(const ProfileConstants& pc, double t);

enum class WfMode { ExactSmallN, MonotoneUpperBound1d };

// W_f distance between equal-size empirical measures: mean of f(|x - xhat|) under
// the optimal (exact mode, assignment problem) or sorted (1-d upper bound) coupling.
double wf_distance(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b,
                   const ProfileConstants& pc, WfMode mode, std::size_t exact_cap = 12);

} // namespace clab
