#include "clab/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/quadrature.hpp"

namespace clab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// negative-part integrand s * (kappa(s))^-
double neg_part(const ConvexityProfile& k, double s) {
    const double v = k(s);
    return v < 0.0 ? -s * v : 0.0;
}

double golden_min(const std::function<double(double)>& fn, double a, double b, int iters = 80) {
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = fn(x1), f2 = fn(x2);
    for (int i = 0; i < iters && b - a > 1e-14 * (1.0 + std::abs(a)); ++i) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - inv_phi * (b - a); f1 = fn(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + inv_phi * (b - a); f2 = fn(x2);
        }
    }
    return std::min(f1, f2);
}

// exact integral of the cubic Hermite piece on [0,h]
double hermite_integral(double h, double y0, double y1, double d0, double d1) {
    return h * (y0 + y1) / 2.0 + h * h * (d0 - d1) / 12.0;
}

// cumulative integral of the monotone-cubic interpolant of (x, y): exact per piece
std::vector<double> cumulative_of_pchip(const std::vector<double>& x, const std::vector<double>& y) {
    const MonotoneCubic itp = MonotoneCubic::fit(x, y);
    std::vector<double> cum(x.size(), 0.0);
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double h = x[i + 1] - x[i];
        cum[i + 1] = cum[i] + hermite_integral(h, y[i], y[i + 1],
                                               itp.derivative(x[i] + 1e-12 * h),
                                               itp.derivative(x[i + 1] - 1e-12 * h));
    }
    return cum;
}

} // namespace

ConvexityProfile::ConvexityProfile(std::function<double(double)> eval, Source source, double domain_cap)
    : eval_(std::move(eval)), source_(source), domain_cap_(domain_cap) {
    if (!(domain_cap_ > 0.0)) throw ConfigError("ConvexityProfile: domain_cap must be positive");
    if (!eval_) throw ConfigError("ConvexityProfile: empty evaluator");
}

double ConvexityProfile::infimum(double lo, double hi) const {
    if (!(hi > lo)) return eval_(std::max(lo, 1e-300));
    const int n = 4096;
    double best = kInf;
    int best_i = 0;
    for (int i = 0; i <= n; ++i) {
        const double r = lo + (hi - lo) * i / n;
        if (r <= 0.0) continue;
        const double v = eval_(r);
        if (v < best) { best = v; best_i = i; }
    }
    const double a = std::max(lo + (hi - lo) * std::max(0, best_i - 1) / n, 1e-300);
    const double b = lo + (hi - lo) * std::min(n, best_i + 1) / n;
    return std::min(best, golden_min([&](double r) { return eval_(r); }, a, b));
}

KReport ConvexityProfile::check_class_k(double quad_tol) const {
    KReport rep;
    // (a) integrable negative part near zero
    try {
        const auto q = quad::integrate([&](double s) { return neg_part(*this, s); }, 0.0, 1.0, quad_tol);
        rep.neg_integral = q.value;
        if (!std::isfinite(q.value) || q.abs_error > 1e-5 * std::max(1.0, std::abs(q.value))) {
            rep.reason = "negative-part integral did not converge";
            return rep;
        }
    } catch (const NumericalError& e) {
        rep.reason = std::string("negative-part integral failed: ") + e.what();
        return rep;
    }
    // (b) strictly positive tail inside the working horizon
    const double H = std::max(domain_cap_, 8.0);
    for (double R : {0.25 * H, 0.4 * H, 0.55 * H, 0.7 * H, 0.85 * H}) {
        if (infimum(R, H) > 1e-12) {
            rep.r_pos = R;
            rep.in_class = true;
            return rep;
        }
    }
    rep.reason = "no strictly positive tail found below domain_cap";
    return rep;
}

ConvexityProfile constant_profile(double alpha, double domain_cap) {
    return ConvexityProfile([alpha](double) { return alpha; },
                            ConvexityProfile::Source::AnalyticClosedForm, domain_cap);
}

ConvexityProfile perturbed_profile(const ConvexityProfile& kappa_U, double C1W, double C_kappaU) {
    if (!(C_kappaU > 0.0) || C_kappaU > 1.0 + 1e-12)
        throw ConfigError("perturbed_profile: C_kappaU must lie in (0,1]");
    if (C1W < 0.0) throw ConfigError("perturbed_profile: C1W must be >= 0");
    const double shift = 4.0 * C1W / C_kappaU;
    // capture by value: the perturbed profile must outlive its input
    ConvexityProfile base = kappa_U;
    if (shift == 0.0) // zero shift: identical profile, just re-tagged
        return ConvexityProfile([base](double r) { return base(r); },
                                ConvexityProfile::Source::Perturbed, kappa_U.domain_cap());
    return ConvexityProfile([base, shift](double r) { return base(r) - shift / r; },
                            ConvexityProfile::Source::Perturbed,
                            std::max(kappa_U.domain_cap(), 4.0 * shift));
}

// ---------------------------------------------------------------------------
// build_constants
// ---------------------------------------------------------------------------

namespace {

// inf_{r >= R} kappa(r), scanned to a horizon that grows with R
double tail_infimum(const ConvexityProfile& k, double R, double base_horizon) {
    const double H = std::max(base_horizon, 1.5 * R + 8.0);
    return k.infimum(std::max(R, 1e-300), H);
}

double bisect_last_false(const std::function<bool(double)>& pred, double lo, double hi) {
    // pred(lo) false, pred(hi) true, pred monotone: returns the crossing point
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}

} // namespace

ProfileConstants build_constants(const ConvexityProfile& profile, const BuildOptions& opts) {
    const KReport kr = profile.check_class_k(opts.quad_tol);
    if (!kr.in_class)
        throw ValidationError("profile rejected (not in class K): " + kr.reason);

    const double H0 = opts.tail_horizon > 0.0 ? opts.tail_horizon
                                              : std::max(profile.domain_cap(), 8.0);
    auto m = [&](double R) { return tail_infimum(profile, R, H0); };

    // R0 = inf{R : inf_{r>=R} kappa >= 0}
    double R0 = 0.0;
    if (m(0.0) < -1e-13) {
        double hi = 0.5;
        while (m(hi) < -1e-13) {
            hi *= 2.0;
            if (hi > opts.r1_cap_factor) throw NumericalError("R0 bracket not found");
        }
        R0 = bisect_last_false([&](double R) { return m(R) >= -1e-13; }, 0.0, hi);
    }

    // R1 = inf{R >= R0 : m(R) * R * (R - R0) >= 8}
    auto r1_pred = [&](double R) { return std::max(m(R), 0.0) * R * (R - R0) >= 8.0; };
    const double r1_cap = opts.r1_cap_factor * std::max(1.0, R0);
    double hi = std::max(R0 + 1.0, 1.0);
    while (!r1_pred(hi)) {
        hi *= 2.0;
        if (hi > r1_cap)
            throw NumericalError("R1 search exceeded cap (liminf condition numerically violated)");
    }
    const double R1 = bisect_last_false(r1_pred, R0, hi);

    // --- r-grid: refined near 0 and around R1; R0/R1 are nodes (integrand kinks) ---
    const double cap = std::max(1.25 * R1, 2.0);
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(opts.table_points) + 16);
    const int n_geo = opts.table_points / 5, n_uni = (3 * opts.table_points) / 5,
              n_r1 = opts.table_points / 5;
    for (int i = 0; i <= n_geo; ++i)
        grid.push_back(cap * 1e-6 * std::pow(1e6, static_cast<double>(i) / n_geo));
    for (int i = 0; i <= n_uni; ++i)
        grid.push_back(cap * static_cast<double>(i) / n_uni);
    for (int i = 0; i <= n_r1; ++i) {
        const double r = R1 * (0.85 + 0.3 * static_cast<double>(i) / n_r1);
        if (r > 0.0 && r < cap) grid.push_back(r);
    }
    if (R0 > 0.0 && R0 < cap) grid.push_back(R0);
    if (R1 > 0.0 && R1 < cap) grid.push_back(R1);
    grid.push_back(0.0);
    grid.push_back(cap);
    std::sort(grid.begin(), grid.end());
    std::vector<double> r;
    for (double v : grid)
        if (r.empty() || v - r.back() > 1e-12 * cap) r.push_back(v);
    if (std::abs(r.back() - cap) > 1e-12 * cap) r.push_back(cap);
    const std::size_t n = r.size();

    // --- sweep: I_neg, phi, Phi.  The grid contains every known kink (R0, R1),
    // so between adjacent nodes the integrands are smooth and one non-adaptive
    // Kronrod rule per level is exact to rounding; nesting adaptive rules here
    // instead stalls chasing the rounding floor of the inner integral.  A loose
    // per-piece adaptive pass is the fallback if the error estimate disagrees.
    const double piece_tol = std::max(opts.quad_tol, 1e-9);
    std::vector<double> I(n, 0.0), phi(n, 1.0), Phi(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = r[i], b = r[i + 1];
        auto np = [&](double s) { return neg_part(profile, s); };
        auto dI = quad::integrate_fixed(np, a, b);
        if (dI.abs_error > piece_tol * std::max(std::abs(dI.value), 1e-12))
            dI = quad::integrate(np, a, b, piece_tol, 8);
        I[i + 1] = I[i] + dI.value;
        phi[i + 1] = std::exp(-0.25 * I[i + 1]);
        if (dI.value == 0.0) { // kappa >= 0 on the whole piece: phi is constant
            Phi[i + 1] = Phi[i] + (b - a) * phi[i];
            continue;
        }
        auto phi_loc = [&](double s) {
            return std::exp(-0.25 * (I[i] + quad::integrate_fixed(np, a, s).value));
        };
        auto dPhi = quad::integrate_fixed(phi_loc, a, b);
        if (dPhi.abs_error > piece_tol * std::max(std::abs(dPhi.value), 1e-12))
            dPhi = quad::integrate(phi_loc, a, b, piece_tol, 8);
        Phi[i + 1] = Phi[i] + dPhi.value;
    }

    // --- Z, lambda, C; then g, f', f from the tabulated ratio ---
    std::vector<double> ratio(n);
    for (std::size_t i = 0; i < n; ++i) ratio[i] = Phi[i] / phi[i];
    const std::vector<double> cum2 = cumulative_of_pchip(r, ratio);

    const auto at = [&](double rv) {
        const auto it = std::lower_bound(r.begin(), r.end(), rv - 1e-9 * cap);
        return static_cast<std::size_t>(it - r.begin());
    };
    const std::size_t iR1 = at(R1), iR0 = at(R0);
    const double Z = cum2[iR1];
    if (!(Z > 0.0)) throw NumericalError("Z_kappa is not positive");
    const double lambda = 2.0 / Z;
    const double C = 0.5 * phi[iR0];
    if (!(C > 1e-300))
        throw ValidationError("C_kappa vanished numerically; profile rejected (C > 0 required)");

    std::vector<double> g(n), fprime(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = 1.0 - std::min(cum2[i], Z) / (2.0 * Z);
        fprime[i] = phi[i] * g[i];
    }
    const std::vector<double> f = cumulative_of_pchip(r, fprime);

    ProfileConstants pc;
    pc.R0 = R0;
    pc.R1 = R1;
    pc.Z = Z;
    pc.lambda = lambda;
    pc.C = C;
    pc.table_cap = cap;
    pc.r = r;
    pc.phi = phi;
    pc.Phi = Phi;
    pc.g = g;
    pc.f = f;
    pc.fprime = fprime;
    pc.f_itp = MonotoneCubic::fit(r, f);
    pc.fprime_itp = MonotoneCubic::fit(r, fprime);
    pc.phi_itp = MonotoneCubic::fit(r, phi);
    pc.Phi_itp = MonotoneCubic::fit(r, Phi);
    pc.g_itp = MonotoneCubic::fit(r, g);
    return pc;
}

ProfileConstants build_constants(const ConvexityProfile& profile, double quad_tol) {
    BuildOptions opts;
    opts.quad_tol = quad_tol;
    return build_constants(profile, opts);
}

ProfileConstants uniformly_convex_constants(double alpha, double table_cap) {
    if (!(alpha > 0.0))
        throw ConfigError("uniformly_convex_constants: alpha must be positive");
    ProfileConstants pc;
    pc.uniformly_convex_mode = true;
    pc.R0 = 0.0;
    pc.R1 = 0.0;
    pc.lambda = alpha;
    pc.Z = 2.0 / alpha;
    pc.C = 1.0;
    pc.table_cap = table_cap;
    pc.r = {0.0, table_cap};
    pc.phi = {1.0, 1.0};
    pc.Phi = {0.0, table_cap};
    pc.g = {1.0, 1.0};
    pc.f = {0.0, table_cap};
    pc.fprime = {1.0, 1.0};
    pc.f_itp = MonotoneCubic::fit(pc.r, pc.f);
    pc.fprime_itp = MonotoneCubic::fit(pc.r, pc.fprime);
    pc.phi_itp = MonotoneCubic::fit(pc.r, pc.phi);
    pc.Phi_itp = MonotoneCubic::fit(pc.r, pc.Phi);
    pc.g_itp = MonotoneCubic::fit(pc.r, pc.g);
    return pc;
}

double ProfileConstants::f_eval(double rv) const {
    if (rv <= 0.0) return 0.0;
    if (rv >= table_cap) return f.back() + fprime.back() * (rv - table_cap); // exact: f' constant past R1
    return f_itp(rv);
}

double ProfileConstants::fprime_eval(double rv) const {
    if (rv <= 0.0) return fprime.front();
    if (rv >= table_cap) return fprime.back();
    return fprime_itp(rv);
}

double ProfileConstants::phi_eval(double rv) const {
    if (rv <= 0.0) return 1.0;
    if (rv >= table_cap) return phi.back();
    return phi_itp(rv);
}

double ProfileConstants::Phi_eval(double rv) const {
    if (rv <= 0.0) return 0.0;
    if (rv >= table_cap) return Phi.back() + phi.back() * (rv - table_cap);
    return Phi_itp(rv);
}

double ProfileConstants::g_eval(double rv) const {
    if (rv <= 0.0) return 1.0;
    if (rv >= table_cap) return g.back();
    return g_itp(rv);
}

double ProfileConstants::q(double t) const { return q_kernel(lambda, C, t); }

double q_kernel(double lambda, double C, double t) {
    if (t < 0.0) throw NumericalError("q_kernel: t must be >= 0");
    if (!(lambda > 0.0) || !(C > 0.0)) throw NumericalError("q_kernel: need lambda > 0, C > 0");
    if (t == 0.0) return kInf;
    const double tstar = 0.5 / lambda;
    if (t < tstar) return 1.0 / (2.0 * C * std::sqrt(M_PI * t));
    return std::sqrt(lambda / (2.0 * M_PI)) * std::exp(0.5 - lambda * t) / C;
}

double q_kernel(const ProfileConstants& pc, double t) { return q_kernel(pc.lambda, pc.C, t); }

nlohmann::json ProfileConstants::to_json() const {
    nlohmann::json grid = nlohmann::json::array();
    for (std::size_t i = 0; i < r.size(); ++i)
        grid.push_back({{"r", r[i]}, {"phi", phi[i]}, {"Phi", Phi[i]},
                        {"g", g[i]}, {"f", f[i]}, {"fprime", fprime[i]}});
    return {{"schema_version", io::schema_version},
            {"R0", R0}, {"R1", R1}, {"Z", Z}, {"lambda", lambda}, {"C", C},
            {"table_cap", table_cap},
            {"uniformly_convex_mode", uniformly_convex_mode},
            {"grid", grid}};
}

void ProfileConstants::write_csv(std::ostream& out) const {
    out << "r,phi,Phi,g,f,fprime\n";
    for (std::size_t i = 0; i < r.size(); ++i)
        out << io::fmt(r[i]) << ',' << io::fmt(phi[i]) << ',' << io::fmt(Phi[i]) << ','
            << io::fmt(g[i]) << ',' << io::fmt(f[i]) << ',' << io::fmt(fprime[i]) << '\n';
}

// ---------------------------------------------------------------------------
// W_f distance
// ---------------------------------------------------------------------------

namespace {

// O(n^3) assignment problem (Kuhn-Munkres with potentials), 1-based internals
double assignment_mean_cost(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
    return total / n;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

double wf_distance(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b,
                   const ProfileConstants& pc, WfMode mode, std::size_t exact_cap) {
    if (a.size() != b.size() || a.empty())
        throw ConfigError("wf_distance: sample sets must be nonempty and equal-sized");
    const std::size_t d = a.front().size();
    for (const auto& s : a)
        if (s.size() != d) throw ConfigError("wf_distance: dimension mismatch in first set");
    for (const auto& s : b)
        if (s.size() != d) throw ConfigError("wf_distance: dimension mismatch in second set");

    if (mode == WfMode::ExactSmallN) {
        if (a.size() > exact_cap)
            throw ConfigError("wf_distance: exact mode over the sample cap");
        std::vector<std::vector<double>> cost(a.size(), std::vector<double>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j)
                cost[i][j] = pc.f_eval(dist(a[i], b[j]));
        return assignment_mean_cost(cost);
    }

    if (d != 1) throw ConfigError("wf_distance: monotone mode is 1-d only");
    std::vector<double> xs(a.size()), ys(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) { xs[i] = a[i][0]; ys[i] = b[i][0]; }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) total += pc.f_eval(std::abs(xs[i] - ys[i]));
    return total / static_cast<double>(xs.size());
}

} // namespace clab
