// Feynman-Kac value estimation: common-random-number identities, error
// scaling, the optimality-PDE residual, and the costate consistency check.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "clab/scenarios.hpp"
#include "clab/value.hpp"

using namespace clab;

namespace {

Scenario ou_scenario(double dt = 1e-2) {
    Scenario sc = parse_scenario_text(
        "[potential]\nfamily=quadratic\nscale=1.0\n"
        "[perturbation]\nfamily=linear\na=0.5\n"
        "[sim]\ndt=0.01\nT=4.0\nn_paths=1000\nseed=42\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime-uniformly-convex\"\n");
    sc.sim.dt = dt;
    return sc;
}

Scenario norm_scenario() {
    return parse_scenario_text(
        "[potential]\nfamily=quadratic\nscale=1.0\n"
        "[perturbation]\nfamily=smooth_norm\nc=0.8\n"
        "[sim]\ndt=0.005\nT=2.0\nn_paths=1000\nseed=42\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime-uniformly-convex\"\n");
}

} // namespace

TEST_CASE("zero perturbation short-circuits to exact zeros") {
    Scenario sc = ou_scenario();
    sc.perturbation = PerturbationSpec{};
    const auto fe = estimate_grad_phi(sc, 1.0, 4.0, {{0.7}}, 2, 1);
    CHECK(fe.phi[0] == 0.0);
    CHECK(fe.se_phi[0] == 0.0);
    CHECK(fe.grad[0][0] == 0.0);
    CHECK(fe.se_grad[0][0] == 0.0);
    const auto fh = estimate_hess_phi(sc, 1.0, 4.0, {{0.7}}, {}, 2, 1);
    CHECK(fh.hess_quot[0] == 0.0);
}

TEST_CASE("estimates replay bitwise and move with the seed") {
    const Scenario sc = norm_scenario();
    const auto a = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 400, 7);
    const auto b = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 400, 7);
    const auto c = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 400, 8);
    CHECK(a.grad[0][0] == b.grad[0][0]);
    CHECK(a.phi[0] == b.phi[0]);
    CHECK(a.se_grad[0][0] == b.se_grad[0][0]);
    CHECK(a.grad[0][0] != c.grad[0][0]);
}

TEST_CASE("linear perturbation: shared noise cancels exactly in the gradient") {
    // with W = a x the finite-difference gradient is a (1 - dt)^k for ANY sample
    // count: both difference points see identical increments
    const Scenario sc = ou_scenario(0.01);
    const double t = 2.0, T = 4.0;
    const int k = int(std::lround((T - t) / sc.sim.dt));
    const double want = 0.5 * std::pow(1.0 - sc.sim.dt, k);
    const auto fe = estimate_grad_phi(sc, t, T, {{0.7}, {-1.3}}, 100, 3);
    CHECK(std::abs(fe.grad[0][0] - want) < 1e-10);
    CHECK(std::abs(fe.grad[1][0] - want) < 1e-10);
    // and the estimate is translation invariant to rounding
    CHECK(std::abs(fe.grad[0][0] - fe.grad[1][0]) < 1e-12);
    // the reported uncertainty reflects the cancellation
    CHECK(fe.se_grad[0][0] < 1e-12);
}

TEST_CASE("batched horizons agree with one-shot estimates under the same seed") {
    const Scenario sc = norm_scenario();
    const auto batch = estimate_grad_phi_times(sc, {0.5, 1.5}, 2.0, {{0.25}}, 500, 11);
    REQUIRE(batch.size() == 2);
    // the longest horizon consumes the full trajectory, so it matches a direct call
    const auto solo = estimate_grad_phi(sc, 0.5, 2.0, {{0.25}}, 500, 11);
    CHECK(batch[0].t == 0.5);
    CHECK(batch[0].grad[0][0] == doctest::Approx(solo.grad[0][0]).epsilon(1e-12));
}

TEST_CASE("standard errors shrink like the square root of the budget") {
    const Scenario sc = norm_scenario();
    const auto small = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 500, 5);
    const auto large = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 8000, 5);
    const double ratio = small.se_grad[0][0] / large.se_grad[0][0];
    CHECK(ratio > 2.5);
    CHECK(ratio < 5.5);
}

TEST_CASE("central differences converge at second order in the step") {
    // common random numbers make the h-dependence nearly deterministic, so the
    // Richardson ratio exposes the truncation order
    const Scenario sc = norm_scenario();
    const double g8 = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 4000, 13, 0.8).grad[0][0];
    const double g4 = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 4000, 13, 0.4).grad[0][0];
    const double g2 = estimate_grad_phi(sc, 1.0, 2.0, {{0.5}}, 4000, 13, 0.2).grad[0][0];
    const double num = g8 - g4, den = g4 - g2;
    REQUIRE(std::abs(den) > 1e-7);
    const double ratio = num / den;
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("optimality-PDE residual: analytic field is exact, sampled field is budgeted") {
    const Scenario sc = ou_scenario(2e-3);
    const auto ob = closed_form_oracle(sc);
    REQUIRE(ob.has_value());
    const auto grid = uniform_hjb_grid(1.0, 3.0, 5, -1.0, 1.0, 5);

    const auto exact = hjb_residual(sc, oracle_hjb_field(*ob), grid, 100, 42);
    CHECK(exact.within_budget);
    CHECK(exact.max_abs_residual < 1e-10);

    const auto mc = hjb_residual(sc, HjbField{}, grid, 3000, 42, 2e-3);
    CHECK(mc.within_budget);
    CHECK(mc.max_abs_residual > 0.0);
    CHECK(mc.rows.size() == exact.rows.size());
    // at time-to-go zero the weight is deterministic, so phi_T = W exactly
    CHECK(mc.terminal_gap < 1e-12);
}

TEST_CASE("costate transported through the controlled flow matches the gradient") {
    const Scenario sc = ou_scenario(4e-3);
    const double a = 0.5, T = 4.0, t = 2.0;
    GradPhiFn grad_phi = [&](double s, const double*, double* out) {
        out[0] = a * std::exp(-(T - s));
    };
    const auto coarse = pontryagin_check(sc, grad_phi, {0.0}, t, T, 4e-3, 17, 200);
    const auto fine = pontryagin_check(sc, grad_phi, {0.0}, t, T, 2e-3, 17, 200);
    CHECK(coarse.max_mean_gap < 5e-3);
    CHECK(coarse.max_mean_gap > 0.0);
    // the gap is pure time-discretization error here: halving dt halves it
    const double ratio = coarse.max_mean_gap / fine.max_mean_gap;
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
}

TEST_CASE("field csv rows carry value and gradient columns") {
    const Scenario sc = ou_scenario(0.01);
    const auto fes = estimate_grad_phi_times(sc, {1.0}, 4.0, {{0.0}}, 200, 3);
    std::ostringstream os;
    write_field_csv(os, fes);
    std::string header = os.str().substr(0, os.str().find('\n'));
    CHECK(header == "t,x0,phi,se_phi,grad0,se_grad");
}
