#include "clab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/quadrature.hpp"
#include "clab/value.hpp"

namespace clab {

namespace {

void need(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

// slowest decay rate of the Hessian envelope for the given case (tail cutoffs)
double envelope_min_rate(const BoundInputs& in, HessCase c) {
    if (c == HessCase::A2primePositiveAlpha)
        return std::min(in.lambda_kbar, 2.0 * in.alpha);
    return std::min(in.lambda_kbar, in.lambda_kU);
}

} // namespace

ValueField zero_value_field() {
    ValueField f;
    f.grad = [](double, double) { return 0.0; };
    f.tau_cap = quad::inf;
    return f;
}

ValueField oracle_value_field(const OracleBundle& ob) {
    ValueField f;
    f.grad = [ob](double tau, double) { return ob.grad_V(tau); };
    f.tau_cap = quad::inf;
    return f;
}

ValueField frozen_mc_field(const Scenario& sc, const FrozenFieldOptions& o) {
    need(sc.sim.d == 1 && sc.potential.d == 1, "frozen field is tabulated in one dimension");
    need(o.tau_max > 0.0 && o.dtau > 0.0, "frozen field needs tau_max > 0 and dtau > 0");
    need(o.x_hi > o.x_lo && o.nx >= 4, "frozen field needs an x window with >= 4 nodes");
    need(o.n_samples >= 2, "frozen field needs n_samples >= 2");

    const int M = std::max(1, int(std::ceil(o.tau_max / o.dtau - 1e-12)));
    const double dtau = o.dtau;
    std::vector<double> ts; // estimator times, horizon T = M*dtau
    const double T = double(M) * dtau;
    for (int j = 0; j <= M; ++j) ts.push_back(T - double(j) * dtau);

    std::vector<Vec> points;
    points.reserve(std::size_t(o.nx));
    std::vector<double> xs(std::size_t(o.nx), 0.0);
    for (int i = 0; i < o.nx; ++i) {
        xs[std::size_t(i)] = o.x_lo + (o.x_hi - o.x_lo) * double(i) / double(o.nx - 1);
        points.push_back({xs[std::size_t(i)]});
    }

    const std::vector<FieldEstimate> est =
        estimate_grad_phi_times(sc, ts, T, points, o.n_samples, o.seed, o.fd_step, o.dt);

    struct Table {
        double dtau = 0.0;
        std::vector<MonotoneCubic> slices; // x-interpolant of grad at tau = j*dtau
    };
    auto tab = std::make_shared<Table>();
    tab->dtau = dtau;
    tab->slices.reserve(std::size_t(M) + 1);
    for (int j = 0; j <= M; ++j) {
        std::vector<double> g(std::size_t(o.nx), 0.0);
        for (int i = 0; i < o.nx; ++i) g[std::size_t(i)] = est[std::size_t(j)].grad[std::size_t(i)][0];
        tab->slices.push_back(MonotoneCubic::fit(xs, std::move(g)));
    }

    ValueField f;
    f.tau_cap = T;
    f.frozen_mc = true;
    f.n_samples = o.n_samples;
    f.seed = o.seed;
    f.grad = [tab](double tau, double x) {
        const int M2 = int(tab->slices.size()) - 1;
        double s = tau / tab->dtau;
        if (s <= 0.0) return tab->slices.front()(x);
        if (s >= double(M2)) return tab->slices.back()(x);
        const int j = int(s);
        const double w = s - double(j);
        return (1.0 - w) * tab->slices[std::size_t(j)](x) +
               w * tab->slices[std::size_t(j) + 1](x);
    };
    return f;
}

FlowMap integrate_flow(const Scenario& sc, const ValueField& field,
                       const std::vector<double>& anchors, double T_max, double ode_dt,
                       double tol_flow, double slice_spacing) {
    need(sc.sim.d == 1, "flow map integration is one-dimensional");
    need(bool(field.grad), "value field has no gradient callback");
    need(field.tau_cap >= T_max, "value field table does not cover the flow horizon");
    need(!anchors.empty(), "no anchors");
    need(T_max > 0.0 && ode_dt > 0.0 && tol_flow > 0.0 && slice_spacing > 0.0,
         "flow parameters must be positive");

    std::vector<double> x = anchors;
    std::sort(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw ValidationError("non-finite anchor");
        if (i && !(x[i - 1] < x[i])) throw ValidationError("anchors must be distinct");
    }

    FlowMap fm;
    fm.anchors = x;
    fm.T_max = T_max;
    fm.ode_dt = ode_dt;
    fm.tol_flow = tol_flow;

    const std::int64_t steps = std::max<std::int64_t>(1, std::llround(T_max / ode_dt));
    const double h = T_max / double(steps);
    const std::int64_t stride = std::max<std::int64_t>(1, std::llround(slice_spacing / h));

    fm.slice_times.push_back(0.0);
    fm.slices.push_back(x);

    std::vector<double> k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), tmp(x.size());
    for (std::int64_t k = 1; k <= steps; ++k) {
        const double t0 = double(k - 1) * h;
        for (std::size_t i = 0; i < x.size(); ++i) k1[i] = field.grad(t0, x[i]);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        for (std::size_t i = 0; i < x.size(); ++i) k2[i] = field.grad(t0 + 0.5 * h, tmp[i]);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        for (std::size_t i = 0; i < x.size(); ++i) k3[i] = field.grad(t0 + 0.5 * h, tmp[i]);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h * k3[i];
        for (std::size_t i = 0; i < x.size(); ++i) k4[i] = field.grad(t0 + h, tmp[i]);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!std::isfinite(x[i]))
                throw NumericalError("flow anchor diverged at t=" + io::fmt(double(k) * h));
            if (i && !(x[i - 1] < x[i]))
                throw NumericalError("flow anchors crossed at t=" + io::fmt(double(k) * h) +
                                     "; reduce ode_dt");
        }
        if (k % stride == 0 || k == steps) {
            fm.slice_times.push_back(double(k) * h);
            fm.slices.push_back(x);
        }
    }

    const std::size_t m = fm.slices.size();
    double shift = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        shift = std::max(shift, std::abs(fm.slices[m - 1][i] - fm.slices[m - 2][i]));
    fm.final_shift = shift;
    fm.converged = shift < tol_flow;
    return fm;
}

Map1d make_map1d(std::vector<double> x, std::vector<double> y) {
    Map1d m;
    m.itp = MonotoneCubic::fit(x, y); // validates strictly increasing abscissae
    m.x = std::move(x);
    m.y = std::move(y);
    return m;
}

TransportMaps extract_transport_maps(const FlowMap& flow) {
    need(flow.converged, "flow has not converged; extend T_max or loosen tol_flow");
    const std::vector<double>& terminal = flow.terminal();
    for (std::size_t i = 1; i < terminal.size(); ++i)
        if (!(terminal[i - 1] < terminal[i]))
            throw NumericalError("terminal slice is not invertible (non-monotone)");
    TransportMaps maps;
    maps.S = make_map1d(flow.anchors, terminal);
    maps.T = make_map1d(terminal, flow.anchors);
    return maps;
}

double invert_by_reverse_time(const ValueField& field, double y, double T_max, double ode_dt) {
    need(bool(field.grad), "value field has no gradient callback");
    need(field.tau_cap >= T_max, "value field table does not cover the flow horizon");
    need(T_max > 0.0 && ode_dt > 0.0, "flow parameters must be positive");
    const std::int64_t steps = std::max<std::int64_t>(1, std::llround(T_max / ode_dt));
    const double h = T_max / double(steps);
    auto g = [&](double s, double z) { return -field.grad(T_max - s, z); };
    double z = y;
    for (std::int64_t k = 1; k <= steps; ++k) {
        const double s0 = double(k - 1) * h;
        const double k1 = g(s0, z);
        const double k2 = g(s0 + 0.5 * h, z + 0.5 * h * k1);
        const double k3 = g(s0 + 0.5 * h, z + 0.5 * h * k2);
        const double k4 = g(s0 + h, z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!std::isfinite(z)) throw NumericalError("reverse-time inversion diverged");
    return z;
}

PushforwardReport pushforward_check(const Map1d& map, const std::vector<double>& samples,
                                    const std::function<double(double)>& density, double lo,
                                    double hi) {
    need(hi > lo, "pushforward window is empty");
    need(!samples.empty(), "pushforward check needs samples");
    need(bool(density), "pushforward check needs a target density");

    const double Z = quad::integrate(density, lo, hi).value;
    if (!(Z > 0.0) || !std::isfinite(Z))
        throw NumericalError("target density failed to normalize on the window");

    std::vector<double> mapped(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) mapped[i] = map(samples[i]);
    std::sort(mapped.begin(), mapped.end());

    PushforwardReport rep;
    rep.n = std::int64_t(mapped.size());
    rep.normalization = Z;
    const double n = double(mapped.size());
    double acc = 0.0, cursor = lo, ks = 0.0;
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        double F;
        if (mapped[i] <= lo) {
            F = 0.0;
        } else if (mapped[i] >= hi) {
            F = 1.0;
        } else {
            acc += quad::integrate(density, cursor, mapped[i]).value;
            cursor = mapped[i];
            F = std::min(1.0, acc / Z);
        }
        ks = std::max(ks, std::max(std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)));
    }
    rep.ks = ks;
    return rep;
}

double empirical_lipschitz(const Map1d& map,
                           const std::vector<std::pair<double, double>>& probes) {
    need(!probes.empty(), "no probe pairs");
    double best = 0.0;
    for (const auto& [a, b] : probes) {
        need(a != b, "degenerate probe pair");
        need(a >= map.lo() && a <= map.hi() && b >= map.lo() && b <= map.hi(),
             "probe outside the anchor hull");
        best = std::max(best, std::abs(map(a) - map(b)) / std::abs(a - b));
    }
    return best;
}

std::vector<std::pair<double, double>> default_probe_pairs(const std::vector<double>& grid) {
    std::vector<std::pair<double, double>> probes;
    for (std::size_t i = 1; i < grid.size(); ++i) probes.emplace_back(grid[i - 1], grid[i]);
    for (std::size_t i = 10; i < grid.size(); i += 5) probes.emplace_back(grid[i - 10], grid[i]);
    return probes;
}

std::pair<double, double> hessian_envelope_to_lipschitz(
    const std::function<double(double)>& lambda_max,
    const std::function<double(double)>& lambda_min) {
    auto total = [](const std::function<double(double)>& f) {
        const quad::Result head = quad::integrate_sqrt_singularity(f, 0.0, 1.0, 1e-9);
        const quad::Result tail = quad::integrate(f, 1.0, quad::inf, 1e-9);
        const double v = head.value + tail.value;
        if (!std::isfinite(v)) throw NumericalError("divergent envelope integral");
        return v;
    };
    return {std::exp(total(lambda_max)), std::exp(-total(lambda_min))};
}

double flow_horizon_rule(const BoundInputs& in, double threshold) {
    need(threshold > 0.0, "threshold must be positive");
    need(in.C1W >= 0.0, "C1W must be nonnegative");
    double tstar = 0.0;
    if (in.mode == AssumptionMode::A1A2primeUniform) {
        need(std::isfinite(in.alpha) && in.alpha > 0.0, "uniformly convex horizon needs alpha > 0");
        if (in.C1W > threshold) tstar = std::log(in.C1W / threshold) / in.alpha;
    } else {
        need(in.lambda_kU > 0.0 && in.C_kU > 0.0, "horizon rule needs kappa_U profile constants");
        if (in.C1W > threshold * in.C_kU)
            tstar = std::log(in.C1W / (in.C_kU * threshold)) / in.lambda_kU;
    }
    return std::max(1.0, tstar);
}

double truncation_factor(const BoundInputs& in, double T_max) {
    need(T_max > 0.0, "T_max must be positive");
    if (in.C1W == 0.0) return 1.0;
    const HessCase c = hess_case_of(in.mode);
    auto env = [&](double tau) { return hessian_envelope(in, 0.0, tau, c); };
    const double rate = envelope_min_rate(in, c);
    const double X = T_max + 60.0 / rate;
    const double branch = 0.5 / in.lambda_kbar; // kink of q
    const quad::Result body = quad::integrate_split(env, T_max, X, {branch}, 1e-9);
    return std::exp(body.value + env(X) / rate);
}

TransportReport transport_report(const Scenario& sc, const ValueField& field,
                                 const ProfileConstants& kU, const ProfileConstants& kbar,
                                 const FlowMap& flow, const std::vector<double>* mu_samples) {
    (void)field;
    const BoundInputs in = bound_inputs_from(sc, kU, kbar);
    const TransportMaps maps = extract_transport_maps(flow);

    TransportReport rep;
    rep.T_max = flow.T_max;
    rep.flow_converged = flow.converged;
    rep.lip_S_emp = empirical_lipschitz(maps.S, default_probe_pairs(maps.S.x));
    rep.lip_T_emp = empirical_lipschitz(maps.T, default_probe_pairs(maps.T.x));
    const LipschitzResult lip = lipschitz_bound(in, lip_case_of(sc.mode));
    rep.lip_bound_exponent = lip.exponent;
    rep.lip_bound = lip.value;
    rep.truncation = truncation_factor(in, flow.T_max);

    if (mu_samples != nullptr) {
        auto density = [&sc](double v) {
            const Vec x{v};
            return std::exp(-sc.potential.value(x) - sc.perturbation.value(x));
        };
        const double lo = maps.S.lo() - 6.0, hi = maps.S.hi() + 6.0;
        rep.ks_pushforward = pushforward_check(maps.T, *mu_samples, density, lo, hi).ks;
    }
    return rep;
}

nlohmann::json TransportReport::to_json() const {
    nlohmann::json j;
    j["schema_version"] = io::schema_version;
    j["lip_S_emp"] = lip_S_emp;
    j["lip_T_emp"] = lip_T_emp;
    j["lip_bound_exponent"] = lip_bound_exponent;
    j["lip_bound"] = std::isfinite(lip_bound) ? nlohmann::json(lip_bound) : nlohmann::json(nullptr);
    j["ks_pushforward"] =
        ks_pushforward >= 0.0 ? nlohmann::json(ks_pushforward) : nlohmann::json(nullptr);
    j["T_max"] = T_max;
    j["truncation_factor"] = truncation;
    j["flow_converged"] = flow_converged;
    return j;
}

std::vector<double> default_anchors(double L, int n) {
    std::vector<double> a(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) a[std::size_t(i)] = -L + 2.0 * L * double(i) / double(n - 1);
    return a;
}

void write_flow_csv(std::ostream& out, const FlowMap& flow) {
    out << "t,anchor,x_S\n";
    for (std::size_t s = 0; s < flow.slices.size(); ++s)
        for (std::size_t i = 0; i < flow.anchors.size(); ++i)
            out << io::fmt(flow.slice_times[s]) << ',' << io::fmt(flow.anchors[i]) << ','
                << io::fmt(flow.slices[s][i]) << '\n';
}

void write_map_csv(std::ostream& out, const TransportMaps& maps) {
    out << "x,S(x),T(x)\n";
    for (std::size_t i = 0; i < maps.S.x.size(); ++i) {
        const double x = maps.S.x[i];
        out << io::fmt(x) << ',' << io::fmt(maps.S.y[i]) << ',' << io::fmt(maps.T(x)) << '\n';
    }
}

} // namespace clab
