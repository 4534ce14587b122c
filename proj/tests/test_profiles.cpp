// Distortion calculus: constants, tabulated functions, the meeting-rate kernel,
// and the empirical transport distance.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "clab/errors.hpp"
#include "clab/profiles.hpp"
#include "clab/quadrature.hpp"
#include "clab/scenarios.hpp"

using namespace clab;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("constant profile: every derived quantity is elementary") {
    const auto pc = build_constants(constant_profile(1.0));
    CHECK(std::abs(pc.R0 - 0.0) < 1e-8);
    CHECK(std::abs(pc.R1 - std::sqrt(8.0)) < 1e-8);
    CHECK(std::abs(pc.lambda - 0.5) < 1e-8);
    CHECK(std::abs(pc.C - 0.5) < 1e-8);

    // phi == 1, Phi == r, g = 1 - r^2/16, f = r - r^3/48 up to R1
    for (double r : {0.3, 1.0, 2.0, 2.8}) {
        CHECK(pc.phi_eval(r) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(pc.Phi_eval(r) == doctest::Approx(r).epsilon(1e-9));
        CHECK(pc.g_eval(r) == doctest::Approx(1.0 - r * r / 16.0).epsilon(1e-7));
        CHECK(pc.f_eval(r) == doctest::Approx(r - r * r * r / 48.0).epsilon(1e-6));
    }
    CHECK(pc.f_eval(1.0) == doctest::Approx(1.0 - 1.0 / 48.0).epsilon(1e-6));

    // beyond R1 the slope is exactly C, including the linear extension
    CHECK(pc.fprime_eval(pc.R1 + 1.0) == doctest::Approx(pc.C).epsilon(1e-9));
    const double cap = pc.table_cap;
    CHECK(pc.f_eval(cap + 3.0) - pc.f_eval(cap + 1.0) ==
          doctest::Approx(2.0 * pc.C).epsilon(1e-12));
}

TEST_CASE("distortion brackets hold on a sample sweep") {
    const auto pc = build_constants(constant_profile(1.0));
    for (int i = 1; i <= 60; ++i) {
        const double r = 0.1 * i;
        const double f = pc.f_eval(r);
        CHECK(f <= r * (1.0 + 1e-9));
        CHECK(f >= pc.C * r * (1.0 - 1e-9));
        CHECK(pc.g_eval(r) >= 0.5 - 1e-9);
        CHECK(pc.g_eval(r) <= 1.0 + 1e-9);
    }
}

TEST_CASE("meeting-rate kernel: closed values, branch continuity, total mass") {
    const double lam = 0.5, C = 0.5;
    CHECK(q_kernel(lam, C, 0.25) == doctest::Approx(2.0 / std::sqrt(kPi)).epsilon(1e-12));
    CHECK(q_kernel(lam, C, 1.0) == doctest::Approx(1.0 / std::sqrt(kPi)).epsilon(1e-12));

    const double tb = 1.0 / (2.0 * lam);
    CHECK(q_kernel(lam, C, tb - 1e-9) ==
          doctest::Approx(q_kernel(lam, C, tb + 1e-9)).epsilon(1e-6));

    // int_0^inf q dt = 4/sqrt(pi) for these constants
    const auto head = quad::integrate_sqrt_singularity(
        [&](double t) { return q_kernel(lam, C, t); }, 0.0, tb);
    const auto tail = quad::integrate([&](double t) { return q_kernel(lam, C, t); }, tb, 200.0);
    CHECK(head.value + tail.value == doctest::Approx(4.0 / std::sqrt(kPi)).epsilon(1e-8));
}

TEST_CASE("linearly shifted profile reproduces its closed-form constants") {
    // kappa == 1 shifted by 2/r: R0 = 2, R1 = 2 + 2 sqrt(2), phi(R0) = e^{-1/2}
    const auto base = constant_profile(1.0);
    const auto pc = build_constants(perturbed_profile(base, 0.25, 0.5));
    CHECK(pc.R0 == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(pc.R1 == doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-6));
    CHECK(pc.phi_eval(pc.R0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
    CHECK(pc.C == doctest::Approx(0.5 * std::exp(-0.5)).epsilon(1e-6));
    // regression pin for the rate (no elementary closed form)
    CHECK(pc.lambda == doctest::Approx(0.152176).epsilon(1e-3));
}

TEST_CASE("uniformly convex base: the shifted equivalence constant is analytic") {
    for (double alpha : {0.5, 1.0, 2.0})
        for (double c1w : {0.25, 0.5, 1.0}) {
            const auto pc =
                build_constants(perturbed_profile(constant_profile(alpha), c1w, 1.0));
            const double want = 0.5 * std::exp(-2.0 * c1w * c1w / alpha);
            CHECK(pc.C == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("quartic-well profile: thresholds solve their defining relations") {
    ConvexityProfile dw([](double r) { return r * r / 4.0 - 1.0; },
                        ConvexityProfile::Source::AnalyticClosedForm, 16.0);
    const auto pc = build_constants(dw);
    CHECK(pc.R0 == doctest::Approx(2.0).epsilon(1e-6));
    // R1: (R^2/4 - 1) * R * (R - R0) = 8 for this increasing profile
    const double lhs = (pc.R1 * pc.R1 / 4.0 - 1.0) * pc.R1 * (pc.R1 - pc.R0);
    CHECK(lhs == doctest::Approx(8.0).epsilon(1e-5));
    // int_0^2 s(1 - s^2/4) ds = 1  ->  phi(R0) = e^{-1/4}
    CHECK(pc.C == doctest::Approx(0.5 * std::exp(-0.25)).epsilon(1e-6));
    CHECK(pc.lambda == doctest::Approx(0.3233).epsilon(1e-3));
}

TEST_CASE("profile class membership is screened") {
    CHECK(constant_profile(1.0).check_class_k().in_class);

    ConvexityProfile bad_tail([](double) { return -1.0; },
                              ConvexityProfile::Source::AnalyticClosedForm, 16.0);
    const auto rt = bad_tail.check_class_k();
    CHECK_FALSE(rt.in_class);
    CHECK_FALSE(rt.reason.empty());
    CHECK_THROWS_AS(build_constants(bad_tail), ValidationError);

    ConvexityProfile bad_origin([](double r) { return 1.0 - 1.0 / (r * r); },
                                ConvexityProfile::Source::AnalyticClosedForm, 16.0);
    const auto ro = bad_origin.check_class_k();
    CHECK_FALSE(ro.in_class);
    CHECK_FALSE(ro.reason.empty());
}

TEST_CASE("shift by zero perturbation is the identity on profiles") {
    const auto base = constant_profile(1.5);
    const auto same = perturbed_profile(base, 0.0, 1.0);
    for (double r : {0.1, 1.0, 5.0}) CHECK(same(r) == base(r));
    CHECK_THROWS_AS(perturbed_profile(base, 0.5, 0.0), ConfigError);
    CHECK_THROWS_AS(perturbed_profile(base, -0.5, 1.0), ConfigError);
}

TEST_CASE("uniformly convex shortcut constants") {
    const auto pc = uniformly_convex_constants(2.0);
    CHECK(pc.uniformly_convex_mode);
    CHECK(pc.lambda == 2.0);
    CHECK(pc.C == 1.0);
    for (double r : {0.2, 1.0, 7.0}) {
        CHECK(pc.f_eval(r) == doctest::Approx(r).epsilon(1e-12));
        CHECK(pc.fprime_eval(r) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("profile infimum finds interior minima") {
    ConvexityProfile wavy([](double r) { return 1.0 + std::sin(r); },
                          ConvexityProfile::Source::AnalyticClosedForm, 16.0);
    CHECK(wavy.infimum(0.0, 16.0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(wavy.infimum(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("empirical transport distance: exact assignment vs brute force") {
    const auto pc = build_constants(constant_profile(1.0));
    const std::vector<std::vector<double>> a = {{0.2}, {1.5}, {3.0}};
    const std::vector<std::vector<double>> b = {{0.0}, {2.0}, {2.5}};

    double brute = std::numeric_limits<double>::infinity();
    std::vector<int> perm = {0, 1, 2};
    do {
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            s += pc.f_eval(std::abs(a[std::size_t(i)][0] - b[std::size_t(perm[std::size_t(i)])][0]));
        brute = std::min(brute, s / 3.0);
    } while (std::next_permutation(perm.begin(), perm.end()));

    const double exact = wf_distance(a, b, pc, WfMode::ExactSmallN);
    const double sorted = wf_distance(a, b, pc, WfMode::MonotoneUpperBound1d);
    CHECK(exact == doctest::Approx(brute).epsilon(1e-12));
    CHECK(sorted >= exact - 1e-12);
}

TEST_CASE("cosine-potential profile closed form") {
    // d/dx (x - sin x) difference quotients: inf over midpoints = 1 - 2|sin(r/2)|/r
    PotentialSpec pot;
    pot.family = PotentialSpec::Family::QuadraticPlusCosine;
    pot.d = 1;
    pot.amplitude = 1.0;
    const auto prof = profile_of_potential(pot, default_r_grid());
    for (double r : {0.5, 1.0, kPi, 5.0, 9.0})
        CHECK(prof(r) == doctest::Approx(1.0 - 2.0 * std::abs(std::sin(r / 2.0)) / r)
                             .epsilon(1e-10));
}
