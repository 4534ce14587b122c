#pragma once

// Flow maps of the interpolating dynamics and the limiting transport map.
//
// The flow integrates dS_t/dt = gradV_t(S_t), S_0 = Id, where gradV_t is the
// gradient of -log P_t e^{-W} (time-to-go t), supplied either by the closed-form
// oracle or by a Monte Carlo field FROZEN on a (t, x) table with one fixed seed:
// the ODE then sees a deterministic field and its sampling error is budgeted
// separately from discretization error.  The limit map S = lim S_t is reached
// once the gradient envelope is negligible; T = S^{-1} pushes the Gibbs measure
// of U onto the perturbed one (1-d: monotone inversion; higher d would integrate
// the same field backward in flow time, see invert_by_reverse_time).

#include <cstdint>
#include <functional>
#include <ostream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clab/bounds.hpp"
#include "clab/interp.hpp"
#include "clab/scenarios.hpp"

namespace clab {

// 1-d gradient field (tau, x) -> d/dx of -log P_tau e^{-W}
struct ValueField {
    std::function<double(double tau, double x)> grad;
    double tau_cap = 0.0; // largest tau the provider is valid for (inf = closed form)
    bool frozen_mc = false;
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
};

ValueField zero_value_field();                          // W == 0: S_t = Id exactly
ValueField oracle_value_field(const OracleBundle& ob);

struct FrozenFieldOptions {
    double tau_max = 10.0;  // table extent in time-to-go
    double dtau = 0.2;      // time-node spacing (linear interpolation between nodes)
    double x_lo = -9.0, x_hi = 9.0;
    int nx = 37;            // spatial nodes (monotone-cubic interpolation)
    std::int64_t n_samples = 20000;
    std::uint64_t seed = 7;
    double fd_step = 0.05;
    double dt = 0.0;        // EM step; <= 0 picks the scenario's sim.dt
};

// One common-random-number ensemble supplies the gradient at every (t, x) node.
ValueField frozen_mc_field(const Scenario& sc, const FrozenFieldOptions& opts);

struct FlowMap {
    std::vector<double> anchors;
    std::vector<double> slice_times;          // saved times, first 0, last T_max
    std::vector<std::vector<double>> slices;  // [slice][anchor]
    double T_max = 0.0, ode_dt = 0.0, tol_flow = 0.0;
    bool converged = false;
    double final_shift = 0.0; // sup_anchor |last slice - previous slice|

    const std::vector<double>& terminal() const { return slices.back(); }
};

// Classic fourth-order integration of every anchor through the frozen field.
// Slices are saved every `slice_spacing` flow-time units; the convergence flag
// compares the last two.  Anchor order is checked each step (trajectories of a
// C^1 field cannot cross); a violation raises a step-size error.
FlowMap integrate_flow(const Scenario& sc, const ValueField& field,
                       const std::vector<double>& anchors, double T_max, double ode_dt,
                       double tol_flow = 1e-3, double slice_spacing = 1.0);

// Monotone map sampled on a grid, evaluated by shape-preserving interpolation
// (linear extension outside the grid hull).
struct Map1d {
    std::vector<double> x, y;
    MonotoneCubic itp;
    double lo() const { return x.front(); }
    double hi() const { return x.back(); }
    double operator()(double t) const { return itp(t); }
};

Map1d make_map1d(std::vector<double> x, std::vector<double> y);

struct TransportMaps {
    Map1d S; // terminal flow: pushes the perturbed measure onto the U-Gibbs one
    Map1d T; // inverse on the flow's range: pushes the U-Gibbs measure back
};

TransportMaps extract_transport_maps(const FlowMap& flow);

// inverse by integrating the field backward in flow time from y (the d > 1
// construction, exercised here in 1-d against the monotone inversion)
double invert_by_reverse_time(const ValueField& field, double y, double T_max, double ode_dt);

struct PushforwardReport {
    double ks = 0.0;          // sup |empirical CDF of mapped samples - target CDF|
    std::int64_t n = 0;
    double normalization = 0.0; // quadrature mass of the unnormalized target density
};

// KS distance between map(samples) and the distribution with unnormalized
// density `density` on [lo, hi] (mass outside the window must be negligible).
PushforwardReport pushforward_check(const Map1d& map, const std::vector<double>& samples,
                                    const std::function<double(double)>& density, double lo,
                                    double hi);

// max |map(x)-map(y)|/|x-y| over probe pairs inside the anchor hull: a lower
// bound on the true Lipschitz constant, the right direction for "empirical
// <= theoretical" tests
double empirical_lipschitz(const Map1d& map, const std::vector<std::pair<double, double>>& probes);

// adjacent pairs plus a sweep of wide pairs over a grid
std::vector<std::pair<double, double>> default_probe_pairs(const std::vector<double>& grid);

// (exp(int_0^inf lambda_max), exp(-int_0^inf lambda_min)) by adaptive quadrature;
// admits an integrable 1/sqrt(t) endpoint at t = 0
std::pair<double, double> hessian_envelope_to_lipschitz(
    const std::function<double(double)>& lambda_max,
    const std::function<double(double)>& lambda_min);

// first flow time with gradient_envelope below `threshold` (never less than 1)
double flow_horizon_rule(const BoundInputs& in, double threshold = 1e-4);

// exp of the Hessian-envelope integral left beyond T_max: the Lipschitz mass the
// truncated flow ignores
double truncation_factor(const BoundInputs& in, double T_max);

struct TransportReport {
    double lip_S_emp = 0.0, lip_T_emp = 0.0;
    double lip_bound_exponent = 0.0, lip_bound = 0.0;
    double ks_pushforward = -1.0; // -1 when no source samples were supplied
    double T_max = 0.0;
    double truncation = 1.0;
    bool flow_converged = false;
    nlohmann::json to_json() const;
};

// Full pipeline on a converged flow: empirical Lipschitz constants from adjacent
// anchors, the closed-form Lipschitz bound for the scenario's case, the flow
// truncation factor, and (when mu_samples is non-null) the KS distance of
// T_#(mu samples) from the perturbed Gibbs density e^{-U-W}.
TransportReport transport_report(const Scenario& sc, const ValueField& field,
                                 const ProfileConstants& kU, const ProfileConstants& kbar,
                                 const FlowMap& flow,
                                 const std::vector<double>* mu_samples = nullptr);

std::vector<double> default_anchors(double L = 6.0, int n = 241);

void write_flow_csv(std::ostream& out, const FlowMap& flow);        // t,anchor,x_S
void write_map_csv(std::ostream& out, const TransportMaps& maps);   // x,S(x),T(x)

} // namespace clab
