#pragma once

// Fritsch-Carlson monotone cubic interpolation on a non-uniform grid.
// Used for the tabulated profile functions (phi, Phi, g, f, f') and for the 1-d
// transport maps: all of these are monotone, and a shape-preserving interpolant
// keeps them that way between nodes (a plain cubic spline does not).

#include <cmath>
#include <cstddef>
#include <vector>

#include "clab/errors.hpp"

namespace clab {

class MonotoneCubic {
public:
    MonotoneCubic() = default;

    static MonotoneCubic fit(std::vector<double> x, std::vector<double> y) {
        const std::size_t n = x.size();
        if (n != y.size() || n < 2)
            throw NumericalError("MonotoneCubic: need >= 2 matching nodes");
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (!(x[i] < x[i + 1]))
                throw NumericalError("MonotoneCubic: abscissae must be strictly increasing");

        std::vector<double> h(n - 1), delta(n - 1), d(n);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x[i + 1] - x[i];
            delta[i] = (y[i + 1] - y[i]) / h[i];
        }
        // interior slopes: weighted harmonic mean where secants agree in sign, else 0
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d[i] = 0.0;
            } else {
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], n > 2 ? h[1] : h[0], delta[0], n > 2 ? delta[1] : delta[0]);
        d[n - 1] = end_slope(h[n - 2], n > 2 ? h[n - 3] : h[n - 2],
                             delta[n - 2], n > 2 ? delta[n - 3] : delta[n - 2]);

        MonotoneCubic mc;
        mc.x_ = std::move(x);
        mc.y_ = std::move(y);
        mc.d_ = std::move(d);
        return mc;
    }

    // Hermite evaluation; linear extrapolation with the end slope outside [x0, xN]
    double operator()(double t) const {
        if (t <= x_.front()) return y_.front() + d_.front() * (t - x_.front());
        if (t >= x_.back()) return y_.back() + d_.back() * (t - x_.back());
        const std::size_t i = interval(t);
        const double h = x_[i + 1] - x_[i];
        const double s = (t - x_[i]) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
    }

    double derivative(double t) const {
        if (t <= x_.front()) return d_.front();
        if (t >= x_.back()) return d_.back();
        const std::size_t i = interval(t);
        const double h = x_[i + 1] - x_[i];
        const double s = (t - x_[i]) / h;
        const double g00 = 6 * s * (s - 1);
        const double g10 = (3 * s - 1) * (s - 1);
        const double g11 = s * (3 * s - 2);
        return g00 * (y_[i] - y_[i + 1]) / h + g10 * d_[i] + g11 * d_[i + 1];
    }

    bool empty() const { return x_.empty(); }
    double x_front() const { return x_.front(); }
    double x_back() const { return x_.back(); }

private:
    static double end_slope(double h0, double h1, double d0, double d1) {
        // non-centered three-point estimate, clipped to preserve shape
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0) s = 0.0;
        else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0)) s = 3.0 * d0;
        return s;
    }

    std::size_t interval(double t) const {
        std::size_t lo = 0, hi = x_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= t ? lo : hi) = mid;
        }
        return lo;
    }

    std::vector<double> x_, y_, d_;
};

} // namespace clab
