// Euler-Maruyama ensembles: moment laws, bitwise determinism, reflection
// coupling contraction, and the controlled dynamics.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "clab/profiles.hpp"
#include "clab/scenarios.hpp"
#include "clab/sde.hpp"

using namespace clab;

namespace {

Scenario ou_scenario(double dt = 1e-3) {
    Scenario sc = parse_scenario_text(
        "[potential]\nfamily=quadratic\nscale=1.0\n"
        "[perturbation]\nfamily=linear\na=0.5\n"
        "[sim]\ndt=0.001\nT=4.0\nn_paths=1000\nseed=42\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime-uniformly-convex\"\n");
    sc.sim.dt = dt;
    return sc;
}

// mean and variance of the discrete recursion X <- X (1 - dt) + sqrt(2 dt) xi
double em_mean(double x0, double dt, int k) { return x0 * std::pow(1.0 - dt, k); }
double em_var(double dt, int k) {
    const double r = (1.0 - dt) * (1.0 - dt);
    return 2.0 * dt * (1.0 - std::pow(r, k)) / (1.0 - r);
}

double normal_cdf(double x, double sd) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); }

} // namespace

TEST_CASE("plain ensemble reproduces the discrete moment recursion") {
    const Scenario sc = ou_scenario(2e-3);
    const double T = 2.0;
    const auto ens = simulate_langevin(sc, {2.0}, T, sc.sim.dt, 7, 40000, {1.0, T});
    REQUIRE(ens.times.size() == 2);
    for (std::size_t j = 0; j < ens.times.size(); ++j) {
        const int k = int(std::lround(ens.times[j] / sc.sim.dt));
        const double want_m = em_mean(2.0, sc.sim.dt, k);
        const double want_v = em_var(sc.sim.dt, k);
        CHECK(std::abs(ens.mean[j][0] - want_m) < 4.0 * ens.se[j][0]);
        // var of the sample variance ~ 2 sigma^4 / n
        const double se_var = want_v * std::sqrt(2.0 / double(ens.n_paths));
        CHECK(std::abs(ens.var[j][0] - want_v) < 4.0 * se_var);
    }
}

TEST_CASE("zero horizon returns the initial law untouched") {
    const Scenario sc = ou_scenario();
    const auto ens = simulate_langevin(sc, {1.25}, 0.0, sc.sim.dt, 7, 100, {0.0});
    CHECK(ens.mean[0][0] == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(ens.var[0][0] == doctest::Approx(0.0));
}

TEST_CASE("ensembles are bit-identical under replay and move with the seed") {
    const Scenario sc = ou_scenario(5e-3);
    const auto a = simulate_langevin(sc, {0.5}, 1.0, sc.sim.dt, 11, 500, {1.0});
    const auto b = simulate_langevin(sc, {0.5}, 1.0, sc.sim.dt, 11, 500, {1.0});
    const auto c = simulate_langevin(sc, {0.5}, 1.0, sc.sim.dt, 12, 500, {1.0});
    REQUIRE(a.final_states.size() == b.final_states.size());
    bool same = true, moved = false;
    for (std::size_t i = 0; i < a.final_states.size(); ++i) {
        same = same && (a.final_states[i] == b.final_states[i]);
        moved = moved || (a.final_states[i] != c.final_states[i]);
    }
    CHECK(same);
    CHECK(moved);
}

TEST_CASE("marginal law approaches the Gibbs measure") {
    const Scenario sc = ou_scenario(5e-3);
    const double T = 6.0;
    const auto ens = simulate_langevin(sc, {0.0}, T, sc.sim.dt, 3, 20000, {T});
    std::vector<double> xs = ens.final_states;
    std::sort(xs.begin(), xs.end());
    const double sd = std::sqrt(em_var(sc.sim.dt, int(std::lround(T / sc.sim.dt))));
    double ks = 0.0;
    const double n = double(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = normal_cdf(xs[i], sd);
        ks = std::max(ks, std::max(F - double(i) / n, double(i + 1) / n - F));
    }
    CHECK(ks < 0.015);
}

TEST_CASE("reflection coupling contracts inside the distortion envelope") {
    const Scenario sc = ou_scenario();
    const auto metric = build_constants(constant_profile(1.0));
    const DriftField drift = langevin_drift(sc);
    PairInit init = [](std::int64_t, NormalStream&, double* x, double* xhat) {
        x[0] = 0.5;
        xhat[0] = -0.5;
    };
    const auto ens = simulate_reflection_coupling(drift, init, 2.0, 2e-3, 42, 20000, metric,
                                                  {}, {0.5, 1.0, 2.0});
    const auto rows = contraction_report(ens, metric);
    REQUIRE(rows.size() == 3);
    const double f0 = metric.f_eval(1.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        // envelope columns follow the closed forms
        CHECK(row.envelope_f ==
              doctest::Approx(std::exp(-metric.lambda * row.t) * f0).epsilon(1e-9));
        CHECK(row.envelope_q == doctest::Approx(q_kernel(metric, row.t) * f0).epsilon(1e-9));
        // the ensemble sits inside them
        CHECK(row.mean_f_delta <= row.envelope_f + 3.0 * row.se_f_delta);
        CHECK(row.frac_distinct <= row.envelope_q + 3.0 * ens.se_frac[i] + 1e-12);
        CHECK(row.mean_f_delta >= 0.0);
    }
    // contraction is strict by t = 2
    CHECK(rows.back().mean_f_delta < 0.6 * f0);
}

TEST_CASE("paths launched together coalesce immediately") {
    const Scenario sc = ou_scenario();
    const auto metric = build_constants(constant_profile(1.0));
    PairInit init = [](std::int64_t, NormalStream&, double* x, double* xhat) {
        x[0] = 0.3;
        xhat[0] = 0.3;
    };
    const auto ens = simulate_reflection_coupling(langevin_drift(sc), init, 0.5, 1e-3, 5, 200,
                                                  metric, {}, {0.25, 0.5});
    for (std::size_t j = 0; j < ens.times.size(); ++j) {
        CHECK(ens.mean_f[j] == 0.0);
        CHECK(ens.frac_distinct[j] == 0.0);
    }
    for (double tc : ens.coalescence_times) CHECK(tc <= 1e-3);
}

TEST_CASE("a generous identification radius freezes every pair at once") {
    const Scenario sc = ou_scenario();
    const auto metric = build_constants(constant_profile(1.0));
    PairInit init = [](std::int64_t, NormalStream&, double* x, double* xhat) {
        x[0] = 0.5;
        xhat[0] = -0.5;
    };
    CoalescenceRule rule;
    rule.delta = 100.0;
    const auto ens = simulate_reflection_coupling(langevin_drift(sc), init, 0.5, 1e-3, 5, 100,
                                                  metric, rule, {0.5});
    CHECK(ens.frac_distinct[0] == 0.0);
    CHECK(ens.mean_f[0] == 0.0);
}

TEST_CASE("coupled ensembles replay bitwise") {
    const Scenario sc = ou_scenario();
    const auto metric = build_constants(constant_profile(1.0));
    PairInit init = [](std::int64_t, NormalStream&, double* x, double* xhat) {
        x[0] = 0.5;
        xhat[0] = -0.5;
    };
    const auto a = simulate_reflection_coupling(langevin_drift(sc), init, 1.0, 2e-3, 9, 300,
                                                metric, {}, {1.0});
    const auto b = simulate_reflection_coupling(langevin_drift(sc), init, 1.0, 2e-3, 9, 300,
                                                metric, {}, {1.0});
    CHECK(a.mean_f[0] == b.mean_f[0]);
    CHECK(a.frac_distinct[0] == b.frac_distinct[0]);
    REQUIRE(a.final_x.size() == b.final_x.size());
    bool same = true;
    for (std::size_t i = 0; i < a.final_x.size(); ++i)
        same = same && (a.final_x[i] == b.final_x[i]) && (a.final_xhat[i] == b.final_xhat[i]);
    CHECK(same);
}

TEST_CASE("controlled dynamics track the discrete mean recursion") {
    const Scenario sc = ou_scenario(2e-3);
    const double a = 0.5, T = 2.0;
    GradPhiFn grad_phi = [&](double s, const double*, double* out) {
        out[0] = a * std::exp(-(T - s));
    };
    const auto ens =
        simulate_optimal_dynamics(sc, grad_phi, {0.0}, 0.0, T, sc.sim.dt, 21, 20000, {T});

    // the drift is linear, so the exact ensemble mean obeys
    // m_{k+1} = m_k (1 - dt) - 2 a e^{-(T - s_k)} dt
    double m = 0.0;
    const int K = int(std::lround(T / sc.sim.dt));
    for (int k = 0; k < K; ++k)
        m = m * (1.0 - sc.sim.dt) - 2.0 * a * std::exp(-(T - k * sc.sim.dt)) * sc.sim.dt;
    CHECK(std::abs(ens.mean[0][0] - m) < 4.0 * ens.se[0][0]);
    // and lands near the continuous-time value x0 e^{-T} - a + a e^{-2T}
    CHECK(ens.mean[0][0] ==
          doctest::Approx(-a + a * std::exp(-2.0 * T)).epsilon(0.02));
}
