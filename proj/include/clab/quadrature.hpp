#pragma once

// Thin adapter over boost's adaptive Gauss-Kronrod so call sites get
//   - breakpoint splitting (our integrands have kinks at R0/R1 and the q branch point),
//   - a sqrt substitution helper for the 1/sqrt(t) endpoint of the kernel q,
//   - a single tolerance/error convention.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "clab/errors.hpp"

namespace clab::quad {

struct Result {
    double value = 0.0;
    double abs_error = 0.0;
};

inline constexpr double inf = std::numeric_limits<double>::infinity();

template <class F>
Result integrate(F&& f, double a, double b, double tol = 1e-10, int max_depth = 15) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    if (a == b) return {0.0, 0.0};
    double err = 0.0;
    const double v = GK::integrate(f, a, b, max_depth, tol, &err);
    if (!std::isfinite(v))
        throw NumericalError("quadrature returned a non-finite value");
    return {v, err};
}

// one non-adaptive Kronrod application: the right tool between breakpoints of a
// piecewise-smooth integrand, where adaptivity only chases the rounding floor
template <class F>
Result integrate_fixed(F&& f, double a, double b) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    if (a == b) return {0.0, 0.0};
    double err = 0.0;
    const double v = GK::integrate(f, a, b, 0, 0.0, &err);
    if (!std::isfinite(v))
        throw NumericalError("quadrature returned a non-finite value");
    return {v, err};
}

// integrate with known interior breakpoints (kinks); points outside (a,b) are ignored
template <class F>
Result integrate_split(F&& f, double a, double b, std::vector<double> pts, double tol = 1e-10) {
    pts.push_back(a);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::remove_if(pts.begin(), pts.end(),
                             [&](double p) { return p < a || p > b; }),
              pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    Result total;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Result r = integrate(f, pts[i], pts[i + 1], tol);
        total.value += r.value;
        total.abs_error += r.abs_error;
    }
    return total;
}

// \int_a^b f(t) dt where f ~ c/sqrt(t-a) near a: substitute t = a + u^2 so the
// integrand 2u f(a+u^2) is smooth at u=0.
template <class F>
Result integrate_sqrt_singularity(F&& f, double a, double b, double tol = 1e-10) {
    if (b <= a) return {0.0, 0.0};
    auto g = [&](double u) { return 2.0 * u * f(a + u * u); };
    return integrate(g, 0.0, std::sqrt(b - a), tol);
}

} // namespace clab::quad
