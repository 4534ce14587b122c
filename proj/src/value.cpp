#include "clab/value.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/threads.hpp"

namespace clab {

namespace {

constexpr double kWeightFloor = 1e-300;

// Advance all K states one Euler step with one shared noise vector.  The two hot
// builtin families are inlined; anything else goes through the generic callback.
struct BatchStepper {
    const PotentialSpec* pot;
    int K, d;
    double dt, s2dt;
    enum class Kind { Quadratic, QuadCos, Generic } kind;
    double c1 = 0.0; // quadratic: 1 - scale*dt

    BatchStepper(const PotentialSpec& p, int K_, int d_, double dt_)
        : pot(&p), K(K_), d(d_), dt(dt_), s2dt(std::sqrt(2.0 * dt_)) {
        if (p.family == PotentialSpec::Family::Quadratic) {
            kind = Kind::Quadratic;
            c1 = 1.0 - p.scale * dt;
        } else if (p.family == PotentialSpec::Family::QuadraticPlusCosine) {
            kind = Kind::QuadCos;
        } else {
            kind = Kind::Generic;
        }
    }

    void step(double* X, const double* xi, double* scratch) const {
        switch (kind) {
        case Kind::Quadratic:
            for (int k = 0; k < K; ++k)
                for (int i = 0; i < d; ++i) X[k * d + i] = c1 * X[k * d + i] + s2dt * xi[i];
            break;
        case Kind::QuadCos: {
            const double A = pot->amplitude;
            for (int k = 0; k < K; ++k)
                for (int i = 0; i < d; ++i) {
                    double& x = X[k * d + i];
                    x += (-x + A * std::sin(x)) * dt + s2dt * xi[i];
                }
            break;
        }
        case Kind::Generic:
            for (int k = 0; k < K; ++k) {
                pot->grad_inplace(X + k * d, scratch);
                for (int i = 0; i < d; ++i) X[k * d + i] += -scratch[i] * dt + s2dt * xi[i];
            }
            break;
        }
    }
};

// Mean Feynman-Kac weights E exp(-W(X_tau^x)) for a list of start states x and a
// list of horizons tau, all from ONE ensemble: every state advances with the same
// increments, and each trajectory is sliced at every horizon.  Block means (about
// 128 blocks) provide the covariance of any combination of the sample means.
struct WeightTable {
    std::vector<double> taus; // effective (snapped to the step grid), ascending
    int n_states = 0;
    std::int64_t n_paths = 0, block_size = 0;
    int n_blocks = 0, full_blocks = 0;
    double dt_eff = 0.0;
    std::vector<double> mean;       // [tau * K + state]
    std::vector<double> block_mean; // [block][tau * K + state]

    double m(int j, int k) const { return mean[std::size_t(j) * n_states + k]; }

    // standard error of sum_i coef_i * mean(node_i); node = j*K + k, coef includes
    // any chain-rule factors (e.g. -1/m for phi = -log m)
    double combo_se(const std::vector<std::pair<int, double>>& nodes) const {
        if (full_blocks < 2) return 0.0;
        const std::size_t MK = mean.size();
        double bar = 0.0;
        std::vector<double> proj(std::size_t(full_blocks), 0.0);
        for (int b = 0; b < full_blocks; ++b) {
            double s = 0.0;
            for (const auto& [node, c] : nodes) s += c * block_mean[std::size_t(b) * MK + std::size_t(node)];
            proj[std::size_t(b)] = s;
            bar += s;
        }
        bar /= double(full_blocks);
        double var = 0.0;
        for (double v : proj) var += (v - bar) * (v - bar);
        var /= double(full_blocks - 1); // variance of a block mean
        return std::sqrt(std::max(0.0, var * double(block_size) / double(n_paths)));
    }
};

WeightTable fk_table(const Scenario& sc, const std::vector<Vec>& states, std::vector<double> taus,
                     double dt, std::int64_t n, std::uint64_t seed) {
    const int d = sc.sim.d;
    const int K = int(states.size());
    const int M = int(taus.size());
    if (K < 1 || M < 1) throw ValidationError("empty state or horizon list");
    if (n < 1) throw ValidationError("n_samples must be >= 1");
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    for (const auto& s : states)
        if (int(s.size()) != d) throw ValidationError("query point dimension mismatch");
    for (int j = 0; j < M; ++j) {
        if (taus[std::size_t(j)] < 0.0) throw ValidationError("negative horizon");
        if (j && taus[std::size_t(j)] < taus[std::size_t(j - 1)])
            throw ValidationError("horizons must be ascending");
    }

    WeightTable tab;
    tab.n_states = K;
    tab.n_paths = n;
    const double tau_max = taus.back();
    const std::int64_t steps = tau_max == 0.0 ? 0 : std::max<std::int64_t>(1, std::llround(tau_max / dt));
    tab.dt_eff = steps ? tau_max / double(steps) : 0.0;
    std::vector<std::int64_t> rec_idx(std::size_t(M), 0);
    for (int j = 0; j < M; ++j) {
        rec_idx[std::size_t(j)] = steps
            ? std::clamp<std::int64_t>(std::llround(taus[std::size_t(j)] / tab.dt_eff), 0, steps)
            : 0;
        tab.taus.push_back(double(rec_idx[std::size_t(j)]) * tab.dt_eff);
    }

    tab.block_size = std::max<std::int64_t>(1, n / 128);
    tab.n_blocks = int((n + tab.block_size - 1) / tab.block_size);
    const std::size_t MK = std::size_t(M) * K;
    std::vector<double> bsum(std::size_t(tab.n_blocks) * MK, 0.0);
    std::vector<double> bmaxw(std::size_t(tab.n_blocks), 0.0);
    const PerturbationSpec& W = sc.perturbation;

    parallel_blocks(n, tab.block_size, [&](std::int64_t block, std::int64_t begin, std::int64_t end) {
        std::vector<double> X(std::size_t(K) * d), xi(std::size_t(d), 0.0),
            scratch(std::size_t(d), 0.0);
        BatchStepper stepper(sc.potential, K, d, tab.dt_eff > 0 ? tab.dt_eff : dt);
        double* acc = &bsum[std::size_t(block) * MK];
        double& maxw = bmaxw[std::size_t(block)];
        for (std::int64_t p = begin; p < end; ++p) {
            NormalStream ns(seed, std::uint64_t(p));
            for (int k = 0; k < K; ++k)
                std::copy(states[std::size_t(k)].begin(), states[std::size_t(k)].end(), X.begin() + k * d);
            int rec = 0;
            auto record = [&](std::int64_t step_k) {
                while (rec < M && rec_idx[std::size_t(rec)] == step_k) {
                    for (int k = 0; k < K; ++k) {
                        const double w = std::exp(-W.value_inplace(X.data() + k * d, d));
                        if (!std::isfinite(w))
                            throw NumericalError("non-finite weight in path " + std::to_string(p) +
                                                 " at tau=" + std::to_string(tab.taus[std::size_t(rec)]));
                        acc[std::size_t(rec) * K + std::size_t(k)] += w;
                        if (w > maxw) maxw = w;
                    }
                    ++rec;
                }
            };
            record(0);
            for (std::int64_t k = 1; k <= steps; ++k) {
                ns.fill_normals(xi.data(), d);
                stepper.step(X.data(), xi.data(), scratch.data());
                record(k);
            }
        }
    });

    double global_max = 0.0;
    for (double v : bmaxw) global_max = std::max(global_max, v);
    if (global_max < kWeightFloor)
        throw NumericalError("all Feynman-Kac weights underflow the 1e-300 floor; "
                             "the perturbation is too large for this horizon (variance warning)");

    tab.mean.assign(MK, 0.0);
    tab.block_mean.assign(std::size_t(tab.n_blocks) * MK, 0.0);
    tab.full_blocks = 0;
    for (int b = 0; b < tab.n_blocks; ++b) {
        const std::int64_t begin = b * tab.block_size;
        const std::int64_t count = std::min<std::int64_t>(tab.block_size, n - begin);
        if (count == tab.block_size) ++tab.full_blocks;
        for (std::size_t i = 0; i < MK; ++i) {
            const double s = bsum[std::size_t(b) * MK + i];
            tab.mean[i] += s;
            tab.block_mean[std::size_t(b) * MK + i] = s / double(count);
        }
    }
    for (std::size_t i = 0; i < MK; ++i) tab.mean[i] /= double(n);
    return tab;
}

double phi_of_mean(double m) { return -std::log(std::max(m, kWeightFloor)); }

enum class Deriv { Phi, Grad, Hess };

std::vector<Vec> default_hess_directions(int d, std::uint64_t seed, int n_random) {
    std::vector<Vec> dirs;
    for (int i = 0; i < d; ++i) {
        Vec e(std::size_t(d), 0.0);
        e[std::size_t(i)] = 1.0;
        dirs.push_back(e);
    }
    NormalStream ns(seed, 0x64697273ULL); // direction stream, disjoint from path streams
    for (int l = 0; l < n_random; ++l) {
        Vec u(std::size_t(d), 0.0);
        double norm = 0.0;
        do {
            ns.fill_normals(u.data(), d);
            norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
        } while (norm < 1e-12);
        for (double& v : u) v /= norm;
        dirs.push_back(u);
    }
    return dirs;
}

std::vector<FieldEstimate> estimate_core(const Scenario& sc, const std::vector<double>& ts,
                                         double T, const std::vector<Vec>& points,
                                         const std::vector<Vec>& directions_in,
                                         std::int64_t n_samples, std::uint64_t seed, double h,
                                         double dt, Deriv mode) {
    const int d = sc.sim.d;
    const int P = int(points.size());
    if (P < 1) throw ValidationError("no query points");
    if (n_samples < 2) throw ValidationError("n_samples must be >= 2");
    if (mode != Deriv::Phi && h <= 0.0) throw ValidationError("fd step h must be positive");
    for (double t : ts)
        if (!(T >= t && t >= 0.0)) throw ValidationError("need T >= t >= 0");
    if (dt <= 0.0) dt = sc.sim.dt;

    std::vector<Vec> directions = directions_in;
    if (mode == Deriv::Hess) {
        if (directions.empty()) directions = default_hess_directions(d, seed, 8);
        for (const auto& u : directions) {
            if (int(u.size()) != d) throw ValidationError("direction dimension mismatch");
            const double norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
            if (std::abs(norm - 1.0) > 1e-8) throw ValidationError("directions must be unit vectors");
        }
    }
    const int D = int(directions.size());
    const int stride = mode == Deriv::Phi ? 1 : (mode == Deriv::Grad ? 1 + 2 * d : 1 + 2 * D);

    auto blank = [&](double t) {
        FieldEstimate fe;
        fe.t = t;
        fe.T = T;
        fe.points = points;
        fe.phi.assign(std::size_t(P), 0.0);
        fe.se_phi.assign(std::size_t(P), 0.0);
        if (mode == Deriv::Grad) {
            fe.grad.assign(std::size_t(P), Vec(std::size_t(d), 0.0));
            fe.se_grad.assign(std::size_t(P), Vec(std::size_t(d), 0.0));
        }
        if (mode == Deriv::Hess) {
            fe.hess_quot.assign(std::size_t(P), 0.0);
            fe.se_hess.assign(std::size_t(P), 0.0);
        }
        fe.n_samples = n_samples;
        fe.seed = seed;
        fe.fd_step = mode == Deriv::Phi ? 0.0 : h;
        return fe;
    };

    std::vector<FieldEstimate> out;
    if (sc.perturbation.is_zero()) {
        // phi == 0 identically: short-circuit, exact zeros
        for (double t : ts) out.push_back(blank(t));
        return out;
    }

    std::vector<Vec> states;
    states.reserve(std::size_t(P) * stride);
    for (const auto& x : points) {
        if (int(x.size()) != d) throw ValidationError("query point dimension mismatch");
        states.push_back(x);
        if (mode == Deriv::Grad) {
            for (int i = 0; i < d; ++i) {
                Vec xp = x, xm = x;
                xp[std::size_t(i)] += h;
                xm[std::size_t(i)] -= h;
                states.push_back(xp);
                states.push_back(xm);
            }
        } else if (mode == Deriv::Hess) {
            for (const auto& u : directions) {
                Vec xp = x, xm = x;
                for (int i = 0; i < d; ++i) {
                    xp[std::size_t(i)] += h * u[std::size_t(i)];
                    xm[std::size_t(i)] -= h * u[std::size_t(i)];
                }
                states.push_back(xp);
                states.push_back(xm);
            }
        }
    }

    std::vector<double> taus_sorted;
    for (double t : ts) taus_sorted.push_back(T - t);
    std::sort(taus_sorted.begin(), taus_sorted.end());
    taus_sorted.erase(std::unique(taus_sorted.begin(), taus_sorted.end()), taus_sorted.end());
    WeightTable tab = fk_table(sc, states, taus_sorted, dt, n_samples, seed);
    const int K = tab.n_states;

    for (double t : ts) {
        const double tau = T - t;
        const int j = int(std::lower_bound(taus_sorted.begin(), taus_sorted.end(), tau) -
                          taus_sorted.begin());
        FieldEstimate fe = blank(t);
        for (int p = 0; p < P; ++p) {
            const int base = p * stride;
            const double m0 = tab.m(j, base);
            fe.phi[std::size_t(p)] = phi_of_mean(m0);
            fe.se_phi[std::size_t(p)] = tab.combo_se({{j * K + base, -1.0 / m0}});
            if (mode == Deriv::Grad) {
                for (int i = 0; i < d; ++i) {
                    const int np = base + 1 + 2 * i, nm = base + 2 + 2 * i;
                    const double mp = tab.m(j, np), mm = tab.m(j, nm);
                    fe.grad[std::size_t(p)][std::size_t(i)] =
                        (phi_of_mean(mp) - phi_of_mean(mm)) / (2.0 * h);
                    fe.se_grad[std::size_t(p)][std::size_t(i)] = tab.combo_se(
                        {{j * K + np, -1.0 / (2.0 * h * mp)}, {j * K + nm, 1.0 / (2.0 * h * mm)}});
                }
            } else if (mode == Deriv::Hess) {
                double best = 0.0, best_se = 0.0;
                bool first = true;
                for (int l = 0; l < D; ++l) {
                    const int np = base + 1 + 2 * l, nm = base + 2 + 2 * l;
                    const double mp = tab.m(j, np), mm = tab.m(j, nm);
                    const double q =
                        (phi_of_mean(mp) - 2.0 * fe.phi[std::size_t(p)] + phi_of_mean(mm)) / (h * h);
                    if (first || std::abs(q) > std::abs(best)) {
                        first = false;
                        best = q;
                        best_se = tab.combo_se({{j * K + np, -1.0 / (h * h * mp)},
                                                {j * K + base, 2.0 / (h * h * m0)},
                                                {j * K + nm, -1.0 / (h * h * mm)}});
                    }
                }
                fe.hess_quot[std::size_t(p)] = best;
                fe.se_hess[std::size_t(p)] = best_se;
            }
        }
        out.push_back(std::move(fe));
    }
    return out;
}

} // namespace

FieldEstimate estimate_phi(const Scenario& sc, double t, double T, const std::vector<Vec>& points,
                           std::int64_t n_samples, std::uint64_t seed, double dt) {
    return estimate_core(sc, {t}, T, points, {}, n_samples, seed, 0.0, dt, Deriv::Phi)[0];
}

FieldEstimate estimate_grad_phi(const Scenario& sc, double t, double T,
                                const std::vector<Vec>& points, std::int64_t n_samples,
                                std::uint64_t seed, double h, double dt) {
    return estimate_core(sc, {t}, T, points, {}, n_samples, seed, h, dt, Deriv::Grad)[0];
}

FieldEstimate estimate_hess_phi(const Scenario& sc, double t, double T,
                                const std::vector<Vec>& points,
                                const std::vector<Vec>& directions, std::int64_t n_samples,
                                std::uint64_t seed, double h, double dt) {
    return estimate_core(sc, {t}, T, points, directions, n_samples, seed, h, dt, Deriv::Hess)[0];
}

std::vector<FieldEstimate> estimate_phi_times(const Scenario& sc, const std::vector<double>& ts,
                                              double T, const std::vector<Vec>& points,
                                              std::int64_t n_samples, std::uint64_t seed,
                                              double dt) {
    return estimate_core(sc, ts, T, points, {}, n_samples, seed, 0.0, dt, Deriv::Phi);
}

std::vector<FieldEstimate> estimate_grad_phi_times(const Scenario& sc,
                                                   const std::vector<double>& ts, double T,
                                                   const std::vector<Vec>& points,
                                                   std::int64_t n_samples, std::uint64_t seed,
                                                   double h, double dt) {
    return estimate_core(sc, ts, T, points, {}, n_samples, seed, h, dt, Deriv::Grad);
}

std::vector<FieldEstimate> estimate_hess_phi_times(const Scenario& sc,
                                                   const std::vector<double>& ts, double T,
                                                   const std::vector<Vec>& points,
                                                   const std::vector<Vec>& directions,
                                                   std::int64_t n_samples, std::uint64_t seed,
                                                   double h, double dt) {
    return estimate_core(sc, ts, T, points, directions, n_samples, seed, h, dt, Deriv::Hess);
}

HjbField oracle_hjb_field(const OracleBundle& ob) {
    HjbField f;
    f.phi = [ob](double t, const double* x) {
        return ob.phi(t, Vec(x, x + ob.d));
    };
    f.dt_phi = [ob](double t, const double* x) {
        return ob.dt_phi(t, Vec(x, x + ob.d));
    };
    f.grad_phi = [ob](double t, const double*, double* out) {
        Vec g = ob.grad_phi(t);
        std::copy(g.begin(), g.end(), out);
    };
    f.laplacian_phi = [ob](double t, const double*) { return ob.laplacian_phi(t); };
    return f;
}

HjbGrid uniform_hjb_grid(double t_lo, double t_hi, int nt, double x_lo, double x_hi, int nx,
                         int d) {
    if (nt < 2 || nx < 2) throw ValidationError("hjb grid needs at least 2 nodes per axis");
    if (d < 1 || d > 2) throw ValidationError("hjb grid supports d <= 2");
    HjbGrid g;
    g.h_t = (t_hi - t_lo) / double(nt - 1);
    g.h_x = (x_hi - x_lo) / double(nx - 1);
    for (int i = 0; i < nt; ++i) g.times.push_back(t_lo + g.h_t * i);
    Vec axis;
    for (int i = 0; i < nx; ++i) axis.push_back(x_lo + g.h_x * i);
    g.axes.assign(std::size_t(d), axis);
    return g;
}

namespace {

void check_uniform(const Vec& v, double h, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs((v[i] - v[i - 1]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw ValidationError(std::string(what) + " grid must be uniform with the declared step");
}

} // namespace

ResidualTable hjb_residual(const Scenario& sc, const HjbField& field, const HjbGrid& grid,
                           std::int64_t n_samples, std::uint64_t seed, double dt) {
    const int d = sc.sim.d;
    if (d > 2) throw ValidationError("hjb_residual: dense grids support d <= 2");
    if (int(grid.axes.size()) != d) throw ValidationError("hjb grid dimension mismatch");
    if (grid.times.empty()) throw ValidationError("hjb grid has no time nodes");
    const double h_t = grid.h_t, h_x = grid.h_x;
    if (h_t <= 0.0 || h_x <= 0.0) throw ValidationError("hjb grid steps must be positive");
    check_uniform(grid.times, h_t, "time");
    for (const auto& a : grid.axes) check_uniform(a, h_x, "space");
    if (dt <= 0.0) dt = sc.sim.dt;
    const double T = sc.sim.horizon;

    ResidualTable table;
    table.n_samples = n_samples;
    table.seed = seed;

    const PotentialSpec& pot = sc.potential;
    const PerturbationSpec& W = sc.perturbation;

    if (field.analytic()) {
        std::vector<double> gx(std::size_t(d), 0.0);
        std::vector<int> idx(std::size_t(d), 0);
        for (double t : grid.times) {
            idx.assign(std::size_t(d), 0);
            while (true) {
                Vec x(std::size_t(d), 0.0);
                for (int i = 0; i < d; ++i) x[std::size_t(i)] = grid.axes[std::size_t(i)][std::size_t(idx[std::size_t(i)])];
                field.grad_phi(t, x.data(), gx.data());
                Vec gU = pot.grad(x);
                double adv = 0.0, sq = 0.0;
                for (int i = 0; i < d; ++i) {
                    adv += gU[std::size_t(i)] * gx[std::size_t(i)];
                    sq += gx[std::size_t(i)] * gx[std::size_t(i)];
                }
                ResidualRow row;
                row.t = t;
                row.x = x;
                const double dtphi = field.dt_phi(t, x.data());
                const double lap = field.laplacian_phi(t, x.data());
                row.residual = dtphi + lap - adv - sq;
                row.budget = 1e-12 * (1.0 + std::abs(dtphi) + std::abs(lap) + std::abs(adv) + sq);
                table.rows.push_back(std::move(row));
                int i = 0;
                for (; i < d; ++i) {
                    if (++idx[std::size_t(i)] < int(grid.axes[std::size_t(i)].size())) break;
                    idx[std::size_t(i)] = 0;
                }
                if (i == d) break;
            }
        }
        double tg = 0.0;
        idx.assign(std::size_t(d), 0);
        while (true) {
            Vec x(std::size_t(d), 0.0);
            for (int i = 0; i < d; ++i) x[std::size_t(i)] = grid.axes[std::size_t(i)][std::size_t(idx[std::size_t(i)])];
            tg = std::max(tg, std::abs(field.phi(T, x.data()) - W.value(x)));
            int i = 0;
            for (; i < d; ++i) {
                if (++idx[std::size_t(i)] < int(grid.axes[std::size_t(i)].size())) break;
                idx[std::size_t(i)] = 0;
            }
            if (i == d) break;
        }
        table.terminal_gap = tg;
    } else {
        // tabulate phi on the grid plus two ghost layers per side, then finite
        // differences with a budget from block covariances + truncation estimates
        const bool mc = !field.phi;
        const int nt = int(grid.times.size());
        const int nt_tot = nt + 4;
        std::vector<double> tnodes(std::size_t(nt_tot), 0.0);
        for (int j = 0; j < nt_tot; ++j) tnodes[std::size_t(j)] = grid.times.front() + h_t * (j - 2);
        std::vector<Vec> xnodes_axis(std::size_t(d), Vec{});
        std::vector<int> nx_tot(std::size_t(d), 0);
        for (int i = 0; i < d; ++i) {
            const Vec& a = grid.axes[std::size_t(i)];
            Vec full;
            for (int k = -2; k < int(a.size()) + 2; ++k) full.push_back(a.front() + h_x * k);
            xnodes_axis[std::size_t(i)] = full;
            nx_tot[std::size_t(i)] = int(full.size());
        }
        std::int64_t K = 1;
        for (int i = 0; i < d; ++i) K *= nx_tot[std::size_t(i)];
        std::vector<Vec> states(std::size_t(K), Vec(std::size_t(d), 0.0));
        for (std::int64_t k = 0; k < K; ++k) {
            std::int64_t rem = k;
            for (int i = 0; i < d; ++i) {
                states[std::size_t(k)][std::size_t(i)] =
                    xnodes_axis[std::size_t(i)][std::size_t(rem % nx_tot[std::size_t(i)])];
                rem /= nx_tot[std::size_t(i)];
            }
        }

        WeightTable tab;
        std::vector<double> phi(std::size_t(nt_tot) * std::size_t(K), 0.0);
        std::vector<int> trow(std::size_t(nt_tot), 0); // t-node -> table tau row
        double dt_use = dt, em_allow = 0.0;
        if (mc) {
            if (n_samples < 2) throw ValidationError("n_samples must be >= 2");
            // snap the integrator step so every tau node is an exact step multiple
            const std::int64_t n_sub = std::max<std::int64_t>(1, std::llround(h_t / dt));
            dt_use = h_t / double(n_sub);
            std::vector<std::pair<double, int>> taus; // (tau, t-node)
            for (int j = 0; j < nt_tot; ++j) {
                const double tau_raw = T - tnodes[std::size_t(j)];
                const std::int64_t steps_j = std::llround(tau_raw / dt_use);
                if (steps_j < 0)
                    throw ValidationError("hjb grid needs T >= t_hi + 2 h_t for the ghost layer");
                taus.push_back({double(steps_j) * dt_use, j});
            }
            std::sort(taus.begin(), taus.end());
            std::vector<double> tau_list;
            for (int j = 0; j < nt_tot; ++j) {
                tau_list.push_back(taus[std::size_t(j)].first);
                trow[std::size_t(taus[std::size_t(j)].second)] = j;
            }
            tab = fk_table(sc, states, tau_list, dt_use, n_samples, seed);
            for (int j = 0; j < nt_tot; ++j) {
                tnodes[std::size_t(j)] = T - tab.taus[std::size_t(trow[std::size_t(j)])];
                for (std::int64_t k = 0; k < K; ++k)
                    phi[std::size_t(j) * std::size_t(K) + std::size_t(k)] =
                        phi_of_mean(tab.m(trow[std::size_t(j)], int(k)));
            }
            em_allow = 0.5 * dt_use; // first-order Euler-Maruyama allowance
        } else {
            for (int j = 0; j < nt_tot; ++j)
                for (std::int64_t k = 0; k < K; ++k)
                    phi[std::size_t(j) * std::size_t(K) + std::size_t(k)] =
                        field.phi(tnodes[std::size_t(j)], states[std::size_t(k)].data());
        }

        auto at = [&](int j, std::int64_t k) { return phi[std::size_t(j) * std::size_t(K) + std::size_t(k)]; };
        auto node = [&](int j, std::int64_t k) { return trow[std::size_t(j)] * int(K) + int(k); };
        auto se_of = [&](const std::vector<std::pair<int, double>>& phi_coefs) {
            if (!mc) return 0.0;
            // chain rule: d phi / d m = -1/m at each node
            std::vector<std::pair<int, double>> nodes;
            for (const auto& [nd, c] : phi_coefs) {
                const double m = tab.mean[std::size_t(nd)];
                nodes.push_back({nd, -c / std::max(m, kWeightFloor)});
            }
            return tab.combo_se(nodes);
        };

        std::vector<std::int64_t> stride(std::size_t(d), 1);
        for (int i = 1; i < d; ++i) stride[std::size_t(i)] = stride[std::size_t(i - 1)] * nx_tot[std::size_t(i - 1)];

        std::vector<int> idx(std::size_t(d), 0); // interior index per axis
        for (int jt = 2; jt < nt_tot - 2; ++jt) {
            idx.assign(std::size_t(d), 0);
            while (true) {
                std::int64_t k = 0;
                Vec x(std::size_t(d), 0.0);
                for (int i = 0; i < d; ++i) {
                    k += (idx[std::size_t(i)] + 2) * stride[std::size_t(i)];
                    x[std::size_t(i)] = xnodes_axis[std::size_t(i)][std::size_t(idx[std::size_t(i)] + 2)];
                }
                Vec gU = pot.grad(x);
                double lap = 0.0, adv = 0.0, sq = 0.0;
                Vec g(std::size_t(d), 0.0);
                for (int i = 0; i < d; ++i) {
                    const std::int64_t s = stride[std::size_t(i)];
                    g[std::size_t(i)] = (at(jt, k + s) - at(jt, k - s)) / (2.0 * h_x);
                    lap += (at(jt, k + s) - 2.0 * at(jt, k) + at(jt, k - s)) / (h_x * h_x);
                    adv += gU[std::size_t(i)] * g[std::size_t(i)];
                    sq += g[std::size_t(i)] * g[std::size_t(i)];
                }
                const double dtphi = (at(jt + 1, k) - at(jt - 1, k)) / (2.0 * h_t);

                ResidualRow row;
                row.t = tnodes[std::size_t(jt)];
                row.x = x;
                row.residual = dtphi + lap - adv - sq;

                std::vector<std::pair<int, double>> J = {
                    {node(jt + 1, k), 1.0 / (2.0 * h_t)},
                    {node(jt - 1, k), -1.0 / (2.0 * h_t)},
                    {node(jt, k), -2.0 * d / (h_x * h_x)},
                };
                for (int i = 0; i < d; ++i) {
                    const std::int64_t s = stride[std::size_t(i)];
                    const double c = (gU[std::size_t(i)] + 2.0 * g[std::size_t(i)]) / (2.0 * h_x);
                    J.push_back({node(jt, k + s), 1.0 / (h_x * h_x) - c});
                    J.push_back({node(jt, k - s), 1.0 / (h_x * h_x) + c});
                }
                const double se = se_of(J);

                // truncation from higher central differences (plus 3 SE on each)
                const double c3t = 1.0 / (2.0 * h_t * h_t * h_t);
                const double d3t = (at(jt + 2, k) - 2.0 * at(jt + 1, k) + 2.0 * at(jt - 1, k) -
                                    at(jt - 2, k)) * c3t;
                const double d3t_se = se_of({{node(jt + 2, k), c3t},
                                             {node(jt + 1, k), -2.0 * c3t},
                                             {node(jt - 1, k), 2.0 * c3t},
                                             {node(jt - 2, k), -c3t}});
                double trunc = h_t * h_t / 6.0 * (std::abs(d3t) + 3.0 * d3t_se);
                for (int i = 0; i < d; ++i) {
                    const std::int64_t s = stride[std::size_t(i)];
                    const double c4 = 1.0 / (h_x * h_x * h_x * h_x);
                    const double d4 = (at(jt, k + 2 * s) - 4.0 * at(jt, k + s) + 6.0 * at(jt, k) -
                                       4.0 * at(jt, k - s) + at(jt, k - 2 * s)) * c4;
                    const double d4_se = se_of({{node(jt, k + 2 * s), c4},
                                                {node(jt, k + s), -4.0 * c4},
                                                {node(jt, k), 6.0 * c4},
                                                {node(jt, k - s), -4.0 * c4},
                                                {node(jt, k - 2 * s), c4}});
                    const double c3 = 1.0 / (2.0 * h_x * h_x * h_x);
                    const double d3 = (at(jt, k + 2 * s) - 2.0 * at(jt, k + s) +
                                       2.0 * at(jt, k - s) - at(jt, k - 2 * s)) * c3;
                    const double d3_se = se_of({{node(jt, k + 2 * s), c3},
                                                {node(jt, k + s), -2.0 * c3},
                                                {node(jt, k - s), 2.0 * c3},
                                                {node(jt, k - 2 * s), -c3}});
                    trunc += h_x * h_x / 12.0 * (std::abs(d4) + 3.0 * d4_se);
                    trunc += h_x * h_x / 6.0 * (std::abs(d3) + 3.0 * d3_se) *
                             (std::abs(gU[std::size_t(i)]) + 2.0 * std::abs(g[std::size_t(i)]));
                }
                row.budget = 5.0 * (se + trunc + em_allow);
                table.rows.push_back(std::move(row));

                int i = 0;
                for (; i < d; ++i) {
                    if (++idx[std::size_t(i)] < int(grid.axes[std::size_t(i)].size())) break;
                    idx[std::size_t(i)] = 0;
                }
                if (i == d) break;
            }
        }
        // terminal slice: the tau = 0 estimator returns exp(-W) exactly, so compare
        // the literal round trip
        double tg = 0.0;
        for (std::int64_t k = 0; k < K; ++k) {
            const double w = W.value(states[std::size_t(k)]);
            tg = std::max(tg, std::abs(-std::log(std::exp(-w)) - w));
        }
        table.terminal_gap = tg;
    }

    for (const auto& r : table.rows) {
        table.max_abs_residual = std::max(table.max_abs_residual, std::abs(r.residual));
        table.max_budget = std::max(table.max_budget, r.budget);
        if (std::abs(r.residual) > r.budget) table.within_budget = false;
    }
    return table;
}

PontryaginReport pontryagin_check(const Scenario& sc, const GradPhiFn& grad_phi, const Vec& x0,
                                  double t, double T, double dt, std::uint64_t seed,
                                  std::int64_t n_paths, std::vector<double> record_times) {
    const int d = sc.sim.d;
    if (!sc.potential.has_hess()) throw ValidationError("pontryagin_check needs the potential Hessian");
    if (int(x0.size()) != d) throw ValidationError("x0 dimension mismatch");
    if (T < t) throw ValidationError("window has T < t");
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    if (n_paths < 1) throw ValidationError("n_paths must be >= 1");

    const std::int64_t steps = T == t ? 0 : std::max<std::int64_t>(1, std::llround((T - t) / dt));
    const double dt_eff = steps ? (T - t) / double(steps) : 0.0;
    if (record_times.empty())
        for (int i = 1; i <= 8; ++i) record_times.push_back(t + (T - t) * i / 8.0);
    std::vector<std::int64_t> rec_idx;
    for (double s : record_times) {
        if (s < t - 1e-12 || s > T + 1e-12) throw ValidationError("record time outside window");
        rec_idx.push_back(steps ? std::clamp<std::int64_t>(std::llround((s - t) / dt_eff), 0, steps) : 0);
    }
    std::sort(rec_idx.begin(), rec_idx.end());
    rec_idx.erase(std::unique(rec_idx.begin(), rec_idx.end()), rec_idx.end());
    const int M = int(rec_idx.size());

    const std::int64_t bs = std::max<std::int64_t>(1, n_paths / 128);
    const int n_blocks = int((n_paths + bs - 1) / bs);
    std::vector<double> bsum(std::size_t(n_blocks) * std::size_t(M), 0.0);

    parallel_blocks(n_paths, bs, [&](std::int64_t block, std::int64_t begin, std::int64_t end) {
        std::vector<double> X(std::size_t(d), 0.0), Y(std::size_t(d), 0.0), gU(std::size_t(d), 0.0),
            gphi(std::size_t(d), 0.0), xi(std::size_t(d), 0.0), Ynew(std::size_t(d), 0.0);
        std::vector<double> H;
        double* acc = &bsum[std::size_t(block) * std::size_t(M)];
        for (std::int64_t p = begin; p < end; ++p) {
            NormalStream ns(seed, std::uint64_t(p));
            std::copy(x0.begin(), x0.end(), X.begin());
            grad_phi(t, X.data(), Y.data());
            int rec = 0;
            auto record = [&](std::int64_t step_k) {
                while (rec < M && rec_idx[std::size_t(rec)] == step_k) {
                    const double s = t + double(step_k) * dt_eff;
                    grad_phi(s, X.data(), gphi.data());
                    double gap = 0.0;
                    for (int i = 0; i < d; ++i)
                        gap += (Y[std::size_t(i)] - gphi[std::size_t(i)]) *
                               (Y[std::size_t(i)] - gphi[std::size_t(i)]);
                    if (!std::isfinite(gap))
                        throw NumericalError("non-finite costate in path " + std::to_string(p) +
                                             " at s=" + std::to_string(s));
                    acc[rec] += std::sqrt(gap);
                    ++rec;
                }
            };
            record(0);
            const double s2dt = std::sqrt(2.0 * dt_eff);
            for (std::int64_t k = 1; k <= steps; ++k) {
                const double s = t + double(k - 1) * dt_eff;
                ns.fill_normals(xi.data(), d);
                sc.potential.grad_inplace(X.data(), gU.data());
                grad_phi(s, X.data(), gphi.data());
                H = sc.potential.hess(Vec(X.begin(), X.end()));
                for (int i = 0; i < d; ++i) {
                    double hy = 0.0;
                    for (int l = 0; l < d; ++l) hy += H[std::size_t(i) * d + std::size_t(l)] * Y[std::size_t(l)];
                    Ynew[std::size_t(i)] = Y[std::size_t(i)] + hy * dt_eff;
                }
                for (int i = 0; i < d; ++i)
                    X[std::size_t(i)] += (-gU[std::size_t(i)] - 2.0 * gphi[std::size_t(i)]) * dt_eff +
                                         s2dt * xi[std::size_t(i)];
                Y.swap(Ynew);
                record(k);
            }
        }
    });

    PontryaginReport rep;
    rep.dt = dt_eff;
    rep.n_paths = n_paths;
    for (int r = 0; r < M; ++r) {
        double s = 0.0;
        for (int b = 0; b < n_blocks; ++b) s += bsum[std::size_t(b) * std::size_t(M) + std::size_t(r)];
        rep.times.push_back(t + double(rec_idx[std::size_t(r)]) * dt_eff);
        rep.mean_abs_gap.push_back(s / double(n_paths));
        rep.max_mean_gap = std::max(rep.max_mean_gap, rep.mean_abs_gap.back());
    }
    return rep;
}

void write_field_csv(std::ostream& out, const std::vector<FieldEstimate>& fields) {
    if (fields.empty()) return;
    const int d = int(fields.front().points.empty() ? 0 : fields.front().points.front().size());
    const bool has_grad = !fields.front().grad.empty();
    const bool has_hess = !fields.front().hess_quot.empty();
    out << 't';
    for (int i = 0; i < d; ++i) out << ",x" << i;
    out << ",phi,se_phi";
    if (has_grad) {
        for (int i = 0; i < d; ++i) out << ",grad" << i;
        out << ",se_grad";
    }
    if (has_hess) out << ",hess_quot,se_hess";
    out << '\n';
    for (const auto& fe : fields)
        for (std::size_t p = 0; p < fe.points.size(); ++p) {
            out << io::fmt(fe.t);
            for (int i = 0; i < d; ++i) out << ',' << io::fmt(fe.points[p][std::size_t(i)]);
            out << ',' << io::fmt(fe.phi[p]) << ',' << io::fmt(fe.se_phi[p]);
            if (has_grad) {
                double se = 0.0;
                for (int i = 0; i < d; ++i) {
                    out << ',' << io::fmt(fe.grad[p][std::size_t(i)]);
                    se = std::max(se, fe.se_grad[p][std::size_t(i)]);
                }
                out << ',' << io::fmt(se);
            }
            if (has_hess) out << ',' << io::fmt(fe.hess_quot[p]) << ',' << io::fmt(fe.se_hess[p]);
            out << '\n';
        }
}

void write_residual_csv(std::ostream& out, const ResidualTable& table) {
    const int d = table.rows.empty() ? 1 : int(table.rows.front().x.size());
    out << 't';
    for (int i = 0; i < d; ++i) out << ",x" << i;
    out << ",residual,budget\n";
    for (const auto& r : table.rows) {
        out << io::fmt(r.t);
        for (int i = 0; i < d; ++i) out << ',' << io::fmt(r.x[std::size_t(i)]);
        out << ',' << io::fmt(r.residual) << ',' << io::fmt(r.budget) << '\n';
    }
}

} // namespace clab
