// Flow maps, inversion, pushforward diagnostics, and the bound plumbing.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "clab/bounds.hpp"
#include "clab/rng.hpp"
#include "clab/scenarios.hpp"
#include "clab/transport.hpp"

using namespace clab;

namespace {

Scenario ou_scenario() {
    return parse_scenario_text(
        "[potential]\nfamily=quadratic\nscale=1.0\n"
        "[perturbation]\nfamily=linear\na=0.5\n"
        "[sim]\ndt=0.01\nT=4.0\nn_paths=1000\nseed=42\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime-uniformly-convex\"\n");
}

Scenario flat_scenario() {
    return parse_scenario_text(
        "[potential]\nfamily=quadratic\nscale=1.0\n"
        "[perturbation]\nfamily=zero\n"
        "[sim]\ndt=0.01\nT=4.0\nn_paths=1000\nseed=42\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime\"\n");
}

constexpr double kSqrt2Pi = 2.5066282746310002;

} // namespace

TEST_CASE("flow through the closed-form field hits the analytic trajectory") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    REQUIRE(ob.has_value());
    const auto flow =
        integrate_flow(sc, oracle_value_field(*ob), {-1.0, 0.0, 1.0}, 4.0, 1e-3);
    CHECK(flow.terminal()[1] ==
          doctest::Approx(0.5 * (1.0 - std::exp(-4.0))).epsilon(1e-6));
    // translations: every anchor moves by the same shift
    CHECK(flow.terminal()[2] - flow.terminal()[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("integrator is fourth order in the step size") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    const ValueField field = oracle_value_field(*ob);
    auto terminal = [&](double dt) {
        return integrate_flow(sc, field, {0.0}, 2.0, dt).terminal()[0];
    };
    const double c = terminal(0.2), m = terminal(0.1), f = terminal(0.05);
    REQUIRE(std::abs(m - f) > 1e-13);
    const double ratio = (c - m) / (m - f);
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
}

TEST_CASE("long-horizon transport pair reproduces the translation") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    const ValueField field = oracle_value_field(*ob);
    const auto flow = integrate_flow(sc, field, default_anchors(), 20.0, 5e-3);
    CHECK(flow.converged);
    const auto maps = extract_transport_maps(flow);

    double worst_T = 0.0, worst_rt = 0.0;
    for (int i = 0; i <= 60; ++i) {
        const double x = -3.0 + 0.1 * i;
        worst_T = std::max(worst_T, std::abs(maps.T(x) - (x - 0.5)));
        worst_rt = std::max(worst_rt, std::abs(maps.T(maps.S(x)) - x));
    }
    CHECK(worst_T < 1e-8);
    CHECK(worst_rt < 1e-8);
    CHECK(empirical_lipschitz(maps.T, default_probe_pairs(maps.T.x)) ==
          doctest::Approx(1.0).epsilon(1e-12));

    // reverse-time inversion agrees with the monotone inversion
    const double rev = invert_by_reverse_time(field, 1.0, 20.0, 5e-3);
    CHECK(rev == doctest::Approx(maps.T(1.0)).epsilon(1e-6));
    CHECK(rev == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("short horizons are flagged as unconverged") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    const auto flow = integrate_flow(sc, oracle_value_field(*ob), default_anchors(), 2.0, 1e-2);
    CHECK_FALSE(flow.converged);
    CHECK(flow.final_shift > 1e-3);
}

TEST_CASE("zero perturbation: the flow is the identity, exactly") {
    const Scenario sc = flat_scenario();
    const auto anchors = default_anchors(6.0, 41);
    const auto flow = integrate_flow(sc, zero_value_field(), anchors, 5.0, 1e-2);
    CHECK(flow.converged);
    CHECK(flow.final_shift == 0.0);
    const auto maps = extract_transport_maps(flow);
    for (double x : {-2.0, 0.0, 1.7}) {
        CHECK(maps.S(x) == doctest::Approx(x).epsilon(1e-13));
        CHECK(maps.T(x) == doctest::Approx(x).epsilon(1e-13));
    }
    CHECK(empirical_lipschitz(maps.T, default_probe_pairs(maps.T.x)) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pushforward distance: identity map against its own Gibbs density") {
    const Scenario sc = flat_scenario();
    const auto flow =
        integrate_flow(sc, zero_value_field(), default_anchors(6.0, 41), 5.0, 1e-2);
    const auto maps = extract_transport_maps(flow);
    std::vector<double> samples(4000);
    NormalStream ns(9, 1);
    for (auto& v : samples) v = ns.normal();
    const auto rep = pushforward_check(
        maps.T, samples, [](double x) { return std::exp(-0.5 * x * x); }, -9.0, 9.0);
    CHECK(rep.n == 4000);
    CHECK(rep.normalization == doctest::Approx(kSqrt2Pi).epsilon(1e-9));
    CHECK(rep.ks < 0.03);
}

TEST_CASE("pushforward distance: transported samples match the tilted density") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    const auto flow =
        integrate_flow(sc, oracle_value_field(*ob), default_anchors(), 20.0, 5e-3);
    const auto maps = extract_transport_maps(flow);
    std::vector<double> samples(4000);
    NormalStream ns(9, 1);
    for (auto& v : samples) v = ns.normal();
    const auto rep = pushforward_check(
        maps.T, samples, [](double x) { return std::exp(-0.5 * x * x - 0.5 * x); }, -9.0, 9.0);
    CHECK(rep.ks < 0.035);
}

TEST_CASE("empirical Lipschitz of an affine table is its slope") {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 40; ++i) {
        xs.push_back(-2.0 + 0.1 * i);
        ys.push_back(2.5 * xs.back() - 1.0);
    }
    const Map1d map = make_map1d(xs, ys);
    CHECK(empirical_lipschitz(map, default_probe_pairs(map.x)) ==
          doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("curvature envelopes integrate to Lipschitz factors") {
    auto zero = [](double) { return 0.0; };
    const auto id = hessian_envelope_to_lipschitz(zero, zero);
    CHECK(id.first == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(id.second == doctest::Approx(1.0).epsilon(1e-9));

    auto decay = [](double t) { return 0.7 * std::exp(-t); };
    const auto d = hessian_envelope_to_lipschitz(decay, decay);
    CHECK(d.first == doctest::Approx(std::exp(0.7)).epsilon(1e-6));
    CHECK(d.second == doctest::Approx(std::exp(-0.7)).epsilon(1e-6));

    // integrable square-root blowup at zero: int t^{-1/2} e^{-t} = sqrt(pi)
    auto rootsing = [](double t) { return std::exp(-t) / std::sqrt(t); };
    const auto s = hessian_envelope_to_lipschitz(rootsing, zero);
    CHECK(s.first == doctest::Approx(std::exp(std::sqrt(3.14159265358979))).epsilon(1e-4));
}

TEST_CASE("flow horizon rule inverts the gradient envelope") {
    const Scenario sc = ou_scenario();
    const auto scs = scenario_constants(sc);
    const BoundInputs in = bound_inputs_from(sc, scs.kU, scs.kbar);
    CHECK(flow_horizon_rule(in, 1e-4) == doctest::Approx(std::log(5000.0)).epsilon(1e-9));
    CHECK(flow_horizon_rule(in, 10.0) == 1.0); // floor
    CHECK(truncation_factor(in, 50.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(truncation_factor(in, 2.0) >= truncation_factor(in, 8.0));
    CHECK(truncation_factor(in, 8.0) >= 1.0 - 1e-12);
}

TEST_CASE("frozen sampled field: table nodes carry the discrete closed form") {
    const Scenario sc = ou_scenario();
    FrozenFieldOptions o;
    o.tau_max = 4.0;
    o.dtau = 0.5;
    o.x_lo = -4.0;
    o.x_hi = 4.0;
    o.nx = 9;
    o.n_samples = 500;
    o.seed = 42;
    o.fd_step = 0.1;
    o.dt = 0.01;
    const ValueField field = frozen_mc_field(sc, o);
    CHECK(field.frozen_mc);
    CHECK(field.tau_cap == doctest::Approx(4.0));
    // at a time node the linear interpolation is exact, the x-table is constant,
    // and shared noise cancels: the value is a (1 - dt)^k to rounding
    for (double tau : {0.5, 1.0, 2.0}) {
        const int k = int(std::lround(tau / o.dt));
        const double want = 0.5 * std::pow(1.0 - o.dt, k);
        CHECK(field.grad(tau, 0.3) == doctest::Approx(want).epsilon(1e-9));
        CHECK(field.grad(tau, -2.1) == doctest::Approx(want).epsilon(1e-9));
    }
    // between nodes the field is within the interpolation error of the envelope
    CHECK(field.grad(0.75, 0.0) ==
          doctest::Approx(0.5 * std::exp(-0.75)).epsilon(0.05));
}

TEST_CASE("transport report summarizes the pipeline") {
    const Scenario sc = ou_scenario();
    const auto ob = closed_form_oracle(sc);
    const auto scs = scenario_constants(sc);
    const ValueField field = oracle_value_field(*ob);
    const auto flow = integrate_flow(sc, field, default_anchors(), 20.0, 5e-3);
    const auto rep = transport_report(sc, field, scs.kU, scs.kbar, flow);
    CHECK(rep.flow_converged);
    CHECK(rep.lip_T_emp == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.lip_S_emp == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.lip_bound == doctest::Approx(38.9462).epsilon(1e-4));
    CHECK(rep.ks_pushforward == -1.0);
    CHECK(rep.truncation >= 1.0 - 1e-12);
    const auto j = rep.to_json();
    CHECK(j["schema_version"] == 1);
    CHECK(j.contains("lip_T_emp"));
    CHECK(j["flow_converged"].get<bool>());
}
