#include "clab/sde.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <ostream>
#include <string>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/threads.hpp"

namespace clab {

namespace {

constexpr std::int64_t kBlock = 4096; // reduction block; fixed so results ignore thread count

struct StepGrid {
    std::int64_t steps = 0;
    double dt_eff = 0.0;
    std::vector<std::int64_t> rec_idx; // ascending, unique
    std::vector<double> rec_times;     // rec_idx * dt_eff
};

StepGrid make_grid(double horizon, double dt, std::vector<double> record_times) {
    if (horizon < 0.0) throw ValidationError("negative horizon");
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    StepGrid g;
    g.steps = horizon == 0.0 ? 0 : std::max<std::int64_t>(1, std::llround(horizon / dt));
    g.dt_eff = g.steps ? horizon / double(g.steps) : 0.0;
    if (record_times.empty()) record_times.push_back(horizon);
    for (double t : record_times) {
        if (t < 0.0 || t > horizon * (1.0 + 1e-12) + 1e-15)
            throw ValidationError("record time outside [0, horizon]");
        std::int64_t k = g.steps ? std::llround(t / g.dt_eff) : 0;
        g.rec_idx.push_back(std::clamp<std::int64_t>(k, 0, g.steps));
    }
    std::sort(g.rec_idx.begin(), g.rec_idx.end());
    g.rec_idx.erase(std::unique(g.rec_idx.begin(), g.rec_idx.end()), g.rec_idx.end());
    for (auto k : g.rec_idx) g.rec_times.push_back(double(k) * g.dt_eff);
    return g;
}

void check_finite(const double* x, int d, std::int64_t path, double t) {
    for (int i = 0; i < d; ++i)
        if (!std::isfinite(x[i]))
            throw NumericalError("non-finite state in path " + std::to_string(path) +
                                 " at t=" + std::to_string(t));
}

struct MeanVar {
    double mean = 0.0, var = 0.0, se = 0.0;
};

// combine per-block (sum, sumsq) pairs in block order
MeanVar reduce_moments(const std::vector<double>& sums, const std::vector<double>& sumsqs,
                       std::int64_t n) {
    double s = 0.0, s2 = 0.0;
    for (double v : sums) s += v;
    for (double v : sumsqs) s2 += v;
    MeanVar mv;
    mv.mean = s / double(n);
    if (n > 1) {
        mv.var = std::max(0.0, (s2 - double(n) * mv.mean * mv.mean) / double(n - 1));
        mv.se = std::sqrt(mv.var / double(n));
    }
    return mv;
}

} // namespace

DriftField langevin_drift(const Scenario& sc) {
    DriftField f;
    f.d = sc.sim.d;
    const PotentialSpec pot = sc.potential;
    f.potential_grad = [pot](double, const double* x, double* out) { pot.grad_inplace(x, out); };
    f.one_sided_lipschitz = pot.alpha ? -*pot.alpha : 0.0;
    return f;
}

EnsembleSummary simulate_ensemble(const DriftField& drift, const InitFn& init, double horizon,
                                  double dt, std::uint64_t seed, std::int64_t n_paths,
                                  std::vector<double> record_times, double t_offset,
                                  bool keep_final) {
    if (n_paths < 1) throw ValidationError("n_paths must be >= 1");
    const int d = drift.d;
    StepGrid g = make_grid(horizon, dt, std::move(record_times));
    const std::int64_t n_rec = std::int64_t(g.rec_idx.size());
    const std::int64_t n_blocks = (n_paths + kBlock - 1) / kBlock;

    // per-(block, record, coord) running sums
    std::vector<double> bsum(std::size_t(n_blocks * n_rec * d), 0.0);
    std::vector<double> bsum2(std::size_t(n_blocks * n_rec * d), 0.0);
    EnsembleSummary out;
    out.d = d;
    out.n_paths = n_paths;
    out.times = g.rec_times;
    if (keep_final) out.final_states.assign(std::size_t(n_paths) * d, 0.0);

    parallel_blocks(n_paths, kBlock, [&](std::int64_t block, std::int64_t begin, std::int64_t end) {
        std::vector<double> x(d), dx(d), ctl(d), xi(d);
        double* acc = &bsum[std::size_t(block * n_rec * d)];
        double* acc2 = &bsum2[std::size_t(block * n_rec * d)];
        for (std::int64_t p = begin; p < end; ++p) {
            NormalStream ns(seed, std::uint64_t(p));
            init(p, ns, x.data());
            std::int64_t rec = 0;
            auto record = [&](std::int64_t k) {
                while (rec < n_rec && g.rec_idx[rec] == k) {
                    check_finite(x.data(), d, p, double(k) * g.dt_eff);
                    for (int i = 0; i < d; ++i) {
                        acc[rec * d + i] += x[i];
                        acc2[rec * d + i] += x[i] * x[i];
                    }
                    ++rec;
                }
            };
            record(0);
            const double s2dt = std::sqrt(2.0 * g.dt_eff);
            for (std::int64_t k = 1; k <= g.steps; ++k) {
                const double t = t_offset + double(k - 1) * g.dt_eff;
                ns.fill_normals(xi.data(), d);
                drift.potential_grad(t, x.data(), dx.data());
                if (drift.control) {
                    drift.control(t, x.data(), ctl.data());
                    for (int i = 0; i < d; ++i)
                        x[i] += (-dx[i] + ctl[i]) * g.dt_eff + s2dt * xi[i];
                } else {
                    for (int i = 0; i < d; ++i) x[i] += -dx[i] * g.dt_eff + s2dt * xi[i];
                }
                record(k);
            }
            if (keep_final) std::memcpy(&out.final_states[std::size_t(p) * d], x.data(),
                                        sizeof(double) * std::size_t(d));
        }
    });

    out.mean.assign(std::size_t(n_rec), Vec(d));
    out.var.assign(std::size_t(n_rec), Vec(d));
    out.se.assign(std::size_t(n_rec), Vec(d));
    std::vector<double> s(std::size_t(n_blocks), 0.0), s2(std::size_t(n_blocks), 0.0);
    for (std::int64_t r = 0; r < n_rec; ++r)
        for (int i = 0; i < d; ++i) {
            for (std::int64_t b = 0; b < n_blocks; ++b) {
                s[std::size_t(b)] = bsum[std::size_t((b * n_rec + r) * d + i)];
                s2[std::size_t(b)] = bsum2[std::size_t((b * n_rec + r) * d + i)];
            }
            MeanVar mv = reduce_moments(s, s2, n_paths);
            out.mean[std::size_t(r)][std::size_t(i)] = mv.mean;
            out.var[std::size_t(r)][std::size_t(i)] = mv.var;
            out.se[std::size_t(r)][std::size_t(i)] = mv.se;
        }
    return out;
}

EnsembleSummary simulate_langevin(const Scenario& sc, const Vec& x0, double horizon, double dt,
                                  std::uint64_t seed, std::int64_t n_paths,
                                  std::vector<double> record_times) {
    if (int(x0.size()) != sc.sim.d) throw ValidationError("x0 dimension mismatch");
    DriftField f = langevin_drift(sc);
    InitFn init = [&x0](std::int64_t, NormalStream&, double* x) {
        std::copy(x0.begin(), x0.end(), x);
    };
    return simulate_ensemble(f, init, horizon, dt, seed, n_paths, std::move(record_times));
}

EnsembleSummary simulate_optimal_dynamics(const Scenario& sc, const GradPhiFn& grad_phi,
                                          const Vec& x0, double t0, double T, double dt,
                                          std::uint64_t seed, std::int64_t n_paths,
                                          std::vector<double> record_times) {
    if (T < t0) throw ValidationError("optimal dynamics window has T < t0");
    if (int(x0.size()) != sc.sim.d) throw ValidationError("x0 dimension mismatch");
    DriftField f = langevin_drift(sc);
    const int d = f.d;
    f.control = [grad_phi, d](double s, const double* x, double* out) {
        grad_phi(s, x, out);
        for (int i = 0; i < d; ++i) out[i] *= -2.0;
    };
    InitFn init = [&x0](std::int64_t, NormalStream&, double* x) {
        std::copy(x0.begin(), x0.end(), x);
    };
    // window times are absolute; shift the recorder to simulation time
    for (double& t : record_times) t -= t0;
    return simulate_ensemble(f, init, T - t0, dt, seed, n_paths, std::move(record_times), t0);
}

CoupledEnsemble simulate_reflection_coupling(const DriftField& drift, const PairInit& init,
                                             double horizon, double dt, std::uint64_t seed,
                                             std::int64_t n_paths, const ProfileConstants& metric,
                                             CoalescenceRule rule, std::vector<double> record_times,
                                             std::int64_t dump_paths) {
    if (n_paths < 1) throw ValidationError("n_paths must be >= 1");
    const int d = drift.d;
    StepGrid g = make_grid(horizon, dt, std::move(record_times));
    const std::int64_t n_rec = std::int64_t(g.rec_idx.size());
    const std::int64_t n_blocks = (n_paths + kBlock - 1) / kBlock;
    const double delta = rule.delta >= 0.0 ? rule.delta : std::sqrt(g.dt_eff);
    const double inf = std::numeric_limits<double>::infinity();

    CoupledEnsemble out;
    out.d = d;
    out.n_paths = n_paths;
    out.dt = g.dt_eff;
    out.delta_coal = delta;
    out.seed = seed;
    out.times = g.rec_times;
    out.coalescence_times.assign(std::size_t(n_paths), inf);
    out.final_x.assign(std::size_t(n_paths) * d, 0.0);
    out.final_xhat.assign(std::size_t(n_paths) * d, 0.0);
    out.dump_paths = std::min<std::int64_t>(dump_paths, n_paths);
    if (out.dump_paths > 0)
        out.dump.assign(std::size_t(n_rec), std::vector<double>(std::size_t(out.dump_paths) * 2 * d, 0.0));

    // per block: [rec] x {sum f, sum f^2, count distinct} plus the t=0 pair
    std::vector<double> bf(std::size_t(n_blocks * n_rec), 0.0), bf2(std::size_t(n_blocks * n_rec), 0.0);
    std::vector<double> bdist(std::size_t(n_blocks * n_rec), 0.0);
    std::vector<double> bf0(std::size_t(n_blocks), 0.0), bf02(std::size_t(n_blocks), 0.0);

    parallel_blocks(n_paths, kBlock, [&](std::int64_t block, std::int64_t begin, std::int64_t end) {
        std::vector<double> x(d), xh(d), dx(d), dxh(d), ctl(d), xi(d);
        double* accf = &bf[std::size_t(block * n_rec)];
        double* accf2 = &bf2[std::size_t(block * n_rec)];
        double* accd = &bdist[std::size_t(block * n_rec)];
        for (std::int64_t p = begin; p < end; ++p) {
            NormalStream ns(seed, std::uint64_t(p));
            init(p, ns, x.data(), xh.data());
            bool met = false;
            double dist = 0.0;
            auto dist_of = [&]() {
                double s = 0.0;
                for (int i = 0; i < d; ++i) s += (x[i] - xh[i]) * (x[i] - xh[i]);
                return std::sqrt(s);
            };
            dist = dist_of();
            if (dist <= delta) {
                met = true;
                out.coalescence_times[std::size_t(p)] = 0.0;
                std::copy(x.begin(), x.end(), xh.begin());
                dist = 0.0;
            }
            {
                const double f0 = metric.f_eval(dist);
                bf0[std::size_t(block)] += f0;
                bf02[std::size_t(block)] += f0 * f0;
            }
            std::int64_t rec = 0;
            auto record = [&](std::int64_t k) {
                while (rec < n_rec && g.rec_idx[rec] == k) {
                    const double t = double(k) * g.dt_eff;
                    check_finite(x.data(), d, p, t);
                    check_finite(xh.data(), d, p, t);
                    const double fv = met ? 0.0 : metric.f_eval(dist);
                    accf[rec] += fv;
                    accf2[rec] += fv * fv;
                    if (!met) accd[rec] += 1.0;
                    if (p < out.dump_paths) {
                        double* row = &out.dump[std::size_t(rec)][std::size_t(p) * 2 * d];
                        std::copy(x.begin(), x.end(), row);
                        std::copy(xh.begin(), xh.end(), row + d);
                    }
                    ++rec;
                }
            };
            record(0);
            const double s2dt = std::sqrt(2.0 * g.dt_eff);
            for (std::int64_t k = 1; k <= g.steps; ++k) {
                const double t = double(k - 1) * g.dt_eff;
                ns.fill_normals(xi.data(), d);
                drift.potential_grad(t, x.data(), dx.data());
                if (drift.control) drift.control(t, x.data(), ctl.data());
                else std::fill(ctl.begin(), ctl.end(), 0.0);
                if (met) {
                    for (int i = 0; i < d; ++i) {
                        x[i] += (-dx[i] + ctl[i]) * g.dt_eff + s2dt * xi[i];
                        xh[i] = x[i];
                    }
                } else {
                    drift.potential_grad(t, xh.data(), dxh.data());
                    double dot = 0.0;
                    for (int i = 0; i < d; ++i) dot += (x[i] - xh[i]) * xi[i];
                    dot /= dist; // dist > delta >= 0 here
#ifndef NDEBUG
                    {
                        double n1 = 0.0, n2 = 0.0;
                        for (int i = 0; i < d; ++i) {
                            const double m = xi[i] - 2.0 * dot * (x[i] - xh[i]) / dist;
                            n1 += xi[i] * xi[i];
                            n2 += m * m;
                        }
                        assert(std::abs(n1 - n2) <= 1e-9 * (1.0 + n1));
                    }
#endif
                    for (int i = 0; i < d; ++i) {
                        const double e_i = (x[i] - xh[i]) / dist;
                        const double xih = xi[i] - 2.0 * dot * e_i;
                        // control on the first path's state in both lines
                        xh[i] += (-dxh[i] + ctl[i]) * g.dt_eff + s2dt * xih;
                        x[i] += (-dx[i] + ctl[i]) * g.dt_eff + s2dt * xi[i];
                    }
                    dist = dist_of();
                    if (dist <= delta) {
                        met = true;
                        out.coalescence_times[std::size_t(p)] = double(k) * g.dt_eff;
                        std::copy(x.begin(), x.end(), xh.begin());
                        dist = 0.0;
                    }
                }
                record(k);
            }
            std::memcpy(&out.final_x[std::size_t(p) * d], x.data(), sizeof(double) * std::size_t(d));
            std::memcpy(&out.final_xhat[std::size_t(p) * d], xh.data(), sizeof(double) * std::size_t(d));
        }
    });

    std::vector<double> s(std::size_t(n_blocks), 0.0), s2(std::size_t(n_blocks), 0.0);
    for (std::int64_t r = 0; r < n_rec; ++r) {
        for (std::int64_t b = 0; b < n_blocks; ++b) {
            s[std::size_t(b)] = bf[std::size_t(b * n_rec + r)];
            s2[std::size_t(b)] = bf2[std::size_t(b * n_rec + r)];
        }
        MeanVar mv = reduce_moments(s, s2, n_paths);
        out.mean_f.push_back(mv.mean);
        out.se_f.push_back(mv.se);
        for (std::int64_t b = 0; b < n_blocks; ++b) {
            s[std::size_t(b)] = bdist[std::size_t(b * n_rec + r)];
            s2[std::size_t(b)] = bdist[std::size_t(b * n_rec + r)]; // indicator: x^2 = x
        }
        mv = reduce_moments(s, s2, n_paths);
        out.frac_distinct.push_back(mv.mean);
        out.se_frac.push_back(mv.se);
    }
    MeanVar mv0 = reduce_moments(bf0, bf02, n_paths);
    out.mean_f0 = mv0.mean;
    out.se_f0 = mv0.se;
    return out;
}

std::vector<ContractionRow> contraction_report(const CoupledEnsemble& ens,
                                               const ProfileConstants& pc) {
    std::vector<ContractionRow> rows;
    for (std::size_t r = 0; r < ens.times.size(); ++r) {
        ContractionRow row;
        row.t = ens.times[r];
        row.mean_f_delta = ens.mean_f[r];
        row.se_f_delta = ens.se_f[r];
        row.envelope_f = std::exp(-pc.lambda * row.t) * ens.mean_f0;
        row.frac_distinct = ens.frac_distinct[r];
        row.envelope_q = pc.q(row.t) * ens.mean_f0;
        rows.push_back(row);
    }
    return rows;
}

void write_contraction_csv(std::ostream& out, const std::vector<ContractionRow>& rows) {
    out << "t,mean_f_delta,se_f_delta,envelope_f,frac_distinct,envelope_q\n";
    for (const auto& r : rows)
        out << io::fmt(r.t) << ',' << io::fmt(r.mean_f_delta) << ',' << io::fmt(r.se_f_delta)
            << ',' << io::fmt(r.envelope_f) << ',' << io::fmt(r.frac_distinct) << ','
            << io::fmt(r.envelope_q) << '\n';
}

void write_paths_csv(std::ostream& out, const CoupledEnsemble& ens) {
    out << "path_id,t";
    for (int i = 0; i < ens.d; ++i) out << ",x" << i;
    for (int i = 0; i < ens.d; ++i) out << ",xhat" << i;
    out << '\n';
    for (std::int64_t p = 0; p < ens.dump_paths; ++p)
        for (std::size_t r = 0; r < ens.times.size(); ++r) {
            const double* row = &ens.dump[r][std::size_t(p) * 2 * ens.d];
            out << p << ',' << io::fmt(ens.times[r]);
            for (int i = 0; i < 2 * ens.d; ++i) out << ',' << io::fmt(row[i]);
            out << '\n';
        }
}

} // namespace clab
