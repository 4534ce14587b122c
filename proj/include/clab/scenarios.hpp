#pragma once

// Declarative (U, W) pairs with derivatives and declared assumption constants,
// plus numeric validation of those declarations on a grid.
//
// Builtin potentials:   quadratic            U = scale*|x|^2/2
//                       quadratic_plus_cosine U = |x|^2/2 + amplitude*sum_i cos(x_i)
//                       double_well          U = a4*x^4/4 - a2*x^2/2   (1-d)
// Builtin perturbations: zero; linear W = a*x_1; smooth_norm W = c*sqrt(1+|x|^2);
//                        tanh_ridge W = c*tanh(x_1).
// Custom callbacks are allowed but must declare their own constants
// (the library verifies declarations, it never infers them).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clab/profiles.hpp"

namespace clab {

using Vec = std::vector<double>;

struct PotentialSpec {
    enum class Family { Quadratic, QuadraticPlusCosine, DoubleWell, Custom };
    Family family = Family::Quadratic;
    int d = 1;
    double scale = 1.0;     // quadratic coefficient
    double amplitude = 1.0; // cosine amplitude
    double a4 = 1.0, a2 = 1.0;

    std::function<double(const Vec&)> custom_value;
    std::function<Vec(const Vec&)> custom_grad;
    std::function<std::vector<double>(const Vec&)> custom_hess; // row-major d*d

    std::optional<double> C2U;   // sup |<u, Hess U u>|          (A2)
    std::optional<double> alpha; // inf <u, Hess U u>            (A2'-(i))
    std::optional<double> C3U;   // Lipschitz constant of Hess U (A2'-(ii))

    double value(const Vec& x) const;
    Vec grad(const Vec& x) const;
    void grad_inplace(const double* x, double* out) const; // hot path, no allocation
    bool has_hess() const;
    std::vector<double> hess(const Vec& x) const;
};

struct PerturbationSpec {
    enum class Family { Zero, Linear, SmoothNorm, TanhRidge, Custom };
    Family family = Family::Zero;
    double a = 0.0;
    double c = 0.0;
    std::function<double(const Vec&)> custom_value;
    std::function<Vec(const Vec&)> custom_grad;
    std::optional<double> C1W_declared;

    bool is_zero() const { return family == Family::Zero; }
    double C1W() const; // declared value, or the family closed form
    double value(const Vec& x) const;
    double value_inplace(const double* x, int d) const;
    Vec grad(const Vec& x) const;
};

struct SimParams {
    double dt = 1e-3;
    double horizon = 8.0;
    std::int64_t n_paths = 100000;
    std::uint64_t seed = 42;
    int d = 1;
};

enum class AssumptionMode { A1A2, A1A2prime, A1A2primeUniform };

std::string to_string(AssumptionMode mode);

struct Scenario {
    PotentialSpec potential;
    PerturbationSpec perturbation;
    SimParams sim;
    AssumptionMode mode = AssumptionMode::A1A2prime;
};

// kappa_U for the scenario potential: closed form for builtin families (1-d for the
// non-quadratic ones), sampled infimum otherwise. Sampled mode minimizes the
// difference quotient over midpoints/directions, so it UPPER-bounds the true kappa.
struct SampleOptions {
    int midpoints = 256;
    int directions = 64;
    std::uint64_t seed = 0x5eed;
};
ConvexityProfile profile_of_potential(const PotentialSpec& pot, const std::vector<double>& r_grid,
                                      const SampleOptions& = {});

// kappa_U and kappa_bar with their contraction constants, as the bounds and
// transport pipelines consume them.  Uniformly-convex mode uses the identity
// distortion for kappa_U (f = Id, C = 1, lambda = alpha); kappa_bar is always
// built from the profile kappa_U(r) - 4 C1W / (C_kappaU r).  C1W = 0 collapses
// kappa_bar to kappa_U exactly.
struct ScenarioConstants {
    ConvexityProfile kU_profile;
    ConvexityProfile kbar_profile;
    ProfileConstants kU;
    ProfileConstants kbar;
};
std::vector<double> default_r_grid(double cap = 16.0, int n = 512);
ScenarioConstants scenario_constants(const Scenario& sc, double quad_tol = 1e-10);

struct ValidationItem {
    std::string assumption;
    bool pass = false;
    std::string detail; // includes the witnessing grid point on failure
};
struct ValidationReport {
    std::vector<ValidationItem> items;
    bool all_pass() const;
    nlohmann::json to_json() const;
};
struct ValidationOptions {
    double L = 6.0;
    int points_per_axis = 64;
    int mc_points = 4096; // d > 2
    double slack = 1e-9;
};
ValidationReport validate_scenario(const Scenario& sc, const ValidationOptions& = {});

// Exact solution for U = scale*|x|^2/2, W = a*x_1: the master oracle.
//   phi_t(x)  = a x_1 e^{-s tau} - (a^2/(2s)) (1 - e^{-2 s tau}),  tau = T - t
//   grad phi  = a e^{-s tau} e_1,   Hess phi = 0
//   S_t(x)    = x + (a/s)(1 - e^{-s t}) e_1,   T(x) = x - (a/s) e_1
struct OracleBundle {
    double a = 0.5;
    double scale = 1.0;
    double T = 4.0;
    int d = 1;

    double phi(double t, const Vec& x) const;
    double dt_phi(double t, const Vec& x) const; // analytic time derivative
    Vec grad_phi(double t) const;                // constant in x
    double laplacian_phi(double) const { return 0.0; }
    Vec S(double t, const Vec& x) const;
    Vec Tmap(const Vec& x) const;
    double grad_V(double t) const; // dV_t/dx_1 = a e^{-scale*t}, the flow field
};
std::optional<OracleBundle> closed_form_oracle(const Scenario& sc);

// Scenario files: [section] key=value pairs (quoted strings or numbers), '#' comments.
// Sections/keys: [potential] family scale amplitude a4 a2 C2U alpha C3U
//                [perturbation] family a c C1W
//                [sim] dt T n_paths seed d
//                [mode] assumptions = "A1-A2" | "A1-A2prime" | "A1-A2prime-uniformly-convex"
Scenario load_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text); // exposed for tests

} // namespace clab
