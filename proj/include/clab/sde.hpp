#pragma once

// Euler-Maruyama ensembles: plain Langevin, optimally controlled, and
// reflection-coupled dynamics, with deterministic block-wise reduction.
//
// Stepping convention: dX = (-potential_grad + control) dt + sqrt(2 dt) * xi,
// xi standard normal, one draw per path per step.  The reflected path consumes
// the SAME draw mirrored across the line joining the states, and the control is
// always evaluated on the FIRST path's state.  Paths are identified exactly once
// |X - Xhat| <= delta_coal (default sqrt(dt)).
//
// Every path owns the counter-based stream (seed, path_index); ensembles are
// bit-identical for any thread count.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "clab/profiles.hpp"
#include "clab/rng.hpp"
#include "clab/scenarios.hpp"

namespace clab {

struct DriftField {
    // gradient of the driving potential V_t; the stepper applies the minus sign
    std::function<void(double t, const double* x, double* out)> potential_grad;
    // optional control term alpha_t(x), added as-is; evaluated on the first path
    std::function<void(double t, const double* x, double* out)> control;
    double one_sided_lipschitz = 0.0; // declared, not verified here
    double control_cap = std::numeric_limits<double>::infinity();
    int d = 1;
};

// time-independent Langevin drift of the scenario potential
DriftField langevin_drift(const Scenario& sc);

using InitFn = std::function<void(std::int64_t path, NormalStream& ns, double* x)>;
using PairInit = std::function<void(std::int64_t path, NormalStream& ns, double* x, double* xhat)>;
using GradPhiFn = std::function<void(double s, const double* x, double* out)>;

struct EnsembleSummary {
    int d = 1;
    std::int64_t n_paths = 0;
    std::vector<double> times;
    std::vector<Vec> mean; // [time][coord]
    std::vector<Vec> var;
    std::vector<Vec> se;   // standard error of the mean, per coordinate
    std::vector<double> final_states; // n_paths * d, row-major
};

EnsembleSummary simulate_ensemble(const DriftField& drift, const InitFn& init, double horizon,
                                  double dt, std::uint64_t seed, std::int64_t n_paths,
                                  std::vector<double> record_times = {}, double t_offset = 0.0,
                                  bool keep_final = true);

EnsembleSummary simulate_langevin(const Scenario& sc, const Vec& x0, double horizon, double dt,
                                  std::uint64_t seed, std::int64_t n_paths,
                                  std::vector<double> record_times = {});

// drift -grad U(x) - 2 grad phi_s(x) on the window s in [t0, T]
EnsembleSummary simulate_optimal_dynamics(const Scenario& sc, const GradPhiFn& grad_phi,
                                          const Vec& x0, double t0, double T, double dt,
                                          std::uint64_t seed, std::int64_t n_paths,
                                          std::vector<double> record_times = {});

struct CoalescenceRule {
    double delta = -1.0; // < 0: use sqrt(dt)
};

struct CoupledEnsemble {
    int d = 1;
    std::int64_t n_paths = 0;
    double dt = 0.0, delta_coal = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> times;
    std::vector<double> mean_f, se_f;   // E f(|X - Xhat|) and its SE
    std::vector<double> frac_distinct, se_frac;
    double mean_f0 = 0.0, se_f0 = 0.0;  // at t = 0 (envelope normalization)
    std::vector<double> coalescence_times; // per path, +inf if never met
    std::vector<double> final_x, final_xhat; // n_paths * d
    // optional raw dump of the first dump_paths paths at record times: [time][path][2d]
    std::vector<std::vector<double>> dump; // flattened per time: path-major, x then xhat
    std::int64_t dump_paths = 0;
};

CoupledEnsemble simulate_reflection_coupling(const DriftField& drift, const PairInit& init,
                                             double horizon, double dt, std::uint64_t seed,
                                             std::int64_t n_paths, const ProfileConstants& metric,
                                             CoalescenceRule rule = {},
                                             std::vector<double> record_times = {},
                                             std::int64_t dump_paths = 0);

struct ContractionRow {
    double t, mean_f_delta, se_f_delta, envelope_f, frac_distinct, envelope_q;
};

std::vector<ContractionRow> contraction_report(const CoupledEnsemble& ens,
                                               const ProfileConstants& pc);

void write_contraction_csv(std::ostream& out, const std::vector<ContractionRow>& rows);
void write_paths_csv(std::ostream& out, const CoupledEnsemble& ens);

} // namespace clab
