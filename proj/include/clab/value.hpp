#pragma once

// Feynman-Kac estimation of the value function phi_t = -log P_{T-t} e^{-W} and
// finite-difference derivatives, plus HJB-residual and Pontryagin diagnostics.
//
// One trajectory bundle serves every query point and every horizon: all states
// advance with the SAME Gaussian increments (common random numbers), and the
// weight e^{-W} is recorded at every requested horizon along the way.  Standard
// errors and the covariances needed for difference quotients come from block
// means (128 blocks), so correlated noise cancels where it should.

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "clab/scenarios.hpp"
#include "clab/sde.hpp"

namespace clab {

struct FieldEstimate {
    double t = 0.0, T = 0.0;
    std::vector<Vec> points;
    Vec phi, se_phi;
    std::vector<Vec> grad;  // empty unless the gradient was estimated
    std::vector<Vec> se_grad;
    Vec hess_quot, se_hess; // max |<u, Hess phi u>| proxy per point
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
    double fd_step = 0.0;
};

// dt <= 0 picks the scenario's sim.dt
FieldEstimate estimate_phi(const Scenario& sc, double t, double T, const std::vector<Vec>& points,
                           std::int64_t n_samples, std::uint64_t seed, double dt = 0.0);
FieldEstimate estimate_grad_phi(const Scenario& sc, double t, double T,
                                const std::vector<Vec>& points, std::int64_t n_samples,
                                std::uint64_t seed, double h = 0.05, double dt = 0.0);
FieldEstimate estimate_hess_phi(const Scenario& sc, double t, double T,
                                const std::vector<Vec>& points,
                                const std::vector<Vec>& directions, // empty: axes + 8 random
                                std::int64_t n_samples, std::uint64_t seed, double h = 0.2,
                                double dt = 0.0);

// batched variants: every listed t shares one trajectory ensemble (the paths are
// sliced at each horizon T - t), so estimates across times use identical noise
std::vector<FieldEstimate> estimate_phi_times(const Scenario& sc, const std::vector<double>& ts,
                                              double T, const std::vector<Vec>& points,
                                              std::int64_t n_samples, std::uint64_t seed,
                                              double dt = 0.0);
std::vector<FieldEstimate> estimate_grad_phi_times(const Scenario& sc,
                                                   const std::vector<double>& ts, double T,
                                                   const std::vector<Vec>& points,
                                                   std::int64_t n_samples, std::uint64_t seed,
                                                   double h = 0.05, double dt = 0.0);
std::vector<FieldEstimate> estimate_hess_phi_times(const Scenario& sc,
                                                   const std::vector<double>& ts, double T,
                                                   const std::vector<Vec>& points,
                                                   const std::vector<Vec>& directions,
                                                   std::int64_t n_samples, std::uint64_t seed,
                                                   double h = 0.2, double dt = 0.0);

// A field that can be plugged into the HJB residual: either analytic (all four
// callbacks set -> residual is evaluated exactly, no finite differences) or
// phi-only (absent derivatives -> estimated on the grid by FD with an error budget).
struct HjbField {
    std::function<double(double t, const double* x)> phi;
    std::function<double(double t, const double* x)> dt_phi;
    std::function<void(double t, const double* x, double* out)> grad_phi;
    std::function<double(double t, const double* x)> laplacian_phi;
    bool analytic() const { return bool(dt_phi) && bool(grad_phi) && bool(laplacian_phi); }
};

HjbField oracle_hjb_field(const OracleBundle& ob);

struct HjbGrid {
    Vec times;              // interior t nodes (uniform)
    std::vector<Vec> axes;  // interior x nodes per coordinate (uniform), d <= 2
    double h_t = 0.075;     // FD steps (also the ghost-layer spacing)
    double h_x = 0.1;
};

HjbGrid uniform_hjb_grid(double t_lo, double t_hi, int nt, double x_lo, double x_hi, int nx,
                         int d = 1);

struct ResidualRow {
    double t = 0.0;
    Vec x;
    double residual = 0.0;
    double budget = 0.0; // 5*(SE + truncation incl. discretization allowance)
};

struct ResidualTable {
    std::vector<ResidualRow> rows;
    double max_abs_residual = 0.0;
    double max_budget = 0.0;
    double terminal_gap = 0.0; // sup |phi_T - W| over the x grid
    bool within_budget = true; // |residual| <= budget at every node
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
};

// analytic field: derivatives plugged in directly, budget at rounding level.
// phi-only / MC: phi estimated at grid + ghost nodes in one CRN ensemble, residual
// by central differences, budget from block-mean covariances + FD truncation
// (estimated from higher differences) + an Euler-Maruyama allowance ~ dt.
ResidualTable hjb_residual(const Scenario& sc, const HjbField& field, const HjbGrid& grid,
                           std::int64_t n_samples, std::uint64_t seed, double dt = 0.0);

struct PontryaginReport {
    std::vector<double> times;
    std::vector<double> mean_abs_gap; // E |Y_s - grad phi_s(X_s)|
    double max_mean_gap = 0.0;
    double dt = 0.0;
    std::int64_t n_paths = 0;
};

// X follows the controlled dynamics dX = (-grad U - 2 grad phi) ds + sqrt(2) dB;
// the costate is integrated forward as dY = Hess U(X) Y ds from Y_t = grad phi_t(X_t)
// and compared in mean against grad phi_s(X_s).
PontryaginReport pontryagin_check(const Scenario& sc, const GradPhiFn& grad_phi, const Vec& x0,
                                  double t, double T, double dt, std::uint64_t seed,
                                  std::int64_t n_paths, std::vector<double> record_times = {});

void write_field_csv(std::ostream& out, const std::vector<FieldEstimate>& fields);
void write_residual_csv(std::ostream& out, const ResidualTable& table);

} // namespace clab
