#include "clab/scenarios.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/rng.hpp"

namespace clab {

// ---------------------------------------------------------------------------
// PotentialSpec / PerturbationSpec evaluation
// ---------------------------------------------------------------------------

double PotentialSpec::value(const Vec& x) const {
    switch (family) {
    case Family::Quadratic: {
        double s = 0.0;
        for (double xi : x) s += xi * xi;
        return 0.5 * scale * s;
    }
    case Family::QuadraticPlusCosine: {
        double s = 0.0, cs = 0.0;
        for (double xi : x) { s += xi * xi; cs += std::cos(xi); }
        return 0.5 * s + amplitude * cs;
    }
    case Family::DoubleWell: {
        const double t = x[0];
        return 0.25 * a4 * t * t * t * t - 0.5 * a2 * t * t;
    }
    case Family::Custom:
        if (!custom_value) throw ConfigError("custom potential: value callback missing");
        return custom_value(x);
    }
    throw ConfigError("unreachable potential family");
}

void PotentialSpec::grad_inplace(const double* x, double* out) const {
    switch (family) {
    case Family::Quadratic:
        for (int i = 0; i < d; ++i) out[i] = scale * x[i];
        return;
    case Family::QuadraticPlusCosine:
        for (int i = 0; i < d; ++i) out[i] = x[i] - amplitude * std::sin(x[i]);
        return;
    case Family::DoubleWell:
        out[0] = a4 * x[0] * x[0] * x[0] - a2 * x[0];
        return;
    case Family::Custom: {
        Vec xv(x, x + d);
        const Vec g = custom_grad ? custom_grad(xv)
                                  : throw ConfigError("custom potential: grad callback missing");
        std::copy(g.begin(), g.end(), out);
        return;
    }
    }
}

Vec PotentialSpec::grad(const Vec& x) const {
    Vec out(static_cast<std::size_t>(d));
    grad_inplace(x.data(), out.data());
    return out;
}

bool PotentialSpec::has_hess() const {
    return family != Family::Custom || static_cast<bool>(custom_hess);
}

std::vector<double> PotentialSpec::hess(const Vec& x) const {
    std::vector<double> H(static_cast<std::size_t>(d) * d, 0.0);
    switch (family) {
    case Family::Quadratic:
        for (int i = 0; i < d; ++i) H[i * d + i] = scale;
        return H;
    case Family::QuadraticPlusCosine:
        for (int i = 0; i < d; ++i) H[i * d + i] = 1.0 - amplitude * std::cos(x[i]);
        return H;
    case Family::DoubleWell:
        H[0] = 3.0 * a4 * x[0] * x[0] - a2;
        return H;
    case Family::Custom:
        if (!custom_hess) throw ConfigError("custom potential: hess callback missing");
        return custom_hess(x);
    }
    throw ConfigError("unreachable potential family");
}

double PerturbationSpec::C1W() const {
    if (C1W_declared) return *C1W_declared;
    switch (family) {
    case Family::Zero: return 0.0;
    case Family::Linear: return std::abs(a);
    case Family::SmoothNorm: return std::abs(c); // |grad| = c|x|/sqrt(1+|x|^2) < c
    case Family::TanhRidge: return std::abs(c);
    case Family::Custom:
        throw ConfigError("custom perturbation requires a declared C1W", "C1W");
    }
    throw ConfigError("unreachable perturbation family");
}

double PerturbationSpec::value_inplace(const double* x, int d) const {
    switch (family) {
    case Family::Zero: return 0.0;
    case Family::Linear: return a * x[0];
    case Family::SmoothNorm: {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += x[i] * x[i];
        return c * std::sqrt(1.0 + s);
    }
    case Family::TanhRidge: return c * std::tanh(x[0]);
    case Family::Custom: {
        Vec xv(x, x + d);
        if (!custom_value) throw ConfigError("custom perturbation: value callback missing");
        return custom_value(xv);
    }
    }
    throw ConfigError("unreachable perturbation family");
}

double PerturbationSpec::value(const Vec& x) const {
    return value_inplace(x.data(), static_cast<int>(x.size()));
}

Vec PerturbationSpec::grad(const Vec& x) const {
    const int d = static_cast<int>(x.size());
    Vec g(x.size(), 0.0);
    switch (family) {
    case Family::Zero: return g;
    case Family::Linear: g[0] = a; return g;
    case Family::SmoothNorm: {
        double s = 0.0;
        for (double xi : x) s += xi * xi;
        const double den = std::sqrt(1.0 + s);
        for (int i = 0; i < d; ++i) g[i] = c * x[i] / den;
        return g;
    }
    case Family::TanhRidge: {
        const double th = std::tanh(x[0]);
        g[0] = c * (1.0 - th * th);
        return g;
    }
    case Family::Custom:
        if (!custom_grad) throw ConfigError("custom perturbation: grad callback missing");
        return custom_grad(x);
    }
    throw ConfigError("unreachable perturbation family");
}

std::string to_string(AssumptionMode mode) {
    switch (mode) {
    case AssumptionMode::A1A2: return "A1-A2";
    case AssumptionMode::A1A2prime: return "A1-A2prime";
    case AssumptionMode::A1A2primeUniform: return "A1-A2prime-uniformly-convex";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// profile_of_potential
// ---------------------------------------------------------------------------

ConvexityProfile profile_of_potential(const PotentialSpec& pot, const std::vector<double>& r_grid,
                                      const SampleOptions& so) {
    if (r_grid.empty()) throw ConfigError("profile_of_potential: empty r-grid");
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
        if (!(r_grid[i] > 0.0))
            throw ConfigError("profile_of_potential: r-grid entries must be positive");
        if (i > 0 && !(r_grid[i] > r_grid[i - 1]))
            throw ConfigError("profile_of_potential: r-grid must be increasing");
    }
    const double cap = r_grid.back();

    switch (pot.family) {
    case PotentialSpec::Family::Quadratic: {
        const double s = pot.scale;
        return ConvexityProfile([s](double) { return s; },
                                ConvexityProfile::Source::AnalyticClosedForm, cap);
    }
    case PotentialSpec::Family::QuadraticPlusCosine:
        if (pot.d == 1) {
            const double A = pot.amplitude;
            // (U'(x)-U'(y))/(x-y) = 1 - A (sin x - sin y)/(x-y); worst midpoint gives
            // kappa(r) = 1 - 2A|sin(r/2)|/r
            return ConvexityProfile(
                [A](double r) { return 1.0 - 2.0 * A * std::abs(std::sin(0.5 * r)) / r; },
                ConvexityProfile::Source::AnalyticClosedForm, cap);
        }
        break; // d > 1: sampled mode below
    case PotentialSpec::Family::DoubleWell:
        if (pot.d == 1) {
            const double a4 = pot.a4, a2 = pot.a2;
            // min of a4(x^2+xy+y^2) - a2 over x-y=r is at midpoint 0
            return ConvexityProfile([a4, a2](double r) { return 0.25 * a4 * r * r - a2; },
                                    ConvexityProfile::Source::AnalyticClosedForm, cap);
        }
        break;
    case PotentialSpec::Family::Custom:
        break;
    }

    // sampled infimum: an upper bound on the true kappa (documented)
    const int d = pot.d;
    const double ball = 4.0 * cap;
    std::vector<double> kap(r_grid.size(), 0.0);
    NormalStream ns(so.seed, 0);
    std::vector<Vec> mids(static_cast<std::size_t>(so.midpoints), Vec(d));
    std::vector<Vec> dirs(static_cast<std::size_t>(so.directions), Vec(d));
    for (auto& m : mids) {
        double nrm2 = 0.0;
        for (auto& v : m) { v = ns.normal(); nrm2 += v * v; }
        // radially re-scale a Gaussian point into the ball (deterministic, covers interior)
        const double u = ns.uniform();
        const double target = ball * std::pow(u, 1.0 / d);
        const double nrm = std::sqrt(nrm2);
        for (auto& v : m) v = nrm > 0 ? v / nrm * target : 0.0;
    }
    for (auto& u : dirs) {
        double nrm2 = 0.0;
        for (auto& v : u) { v = ns.normal(); nrm2 += v * v; }
        const double nrm = std::sqrt(nrm2);
        for (auto& v : u) v = nrm > 0 ? v / nrm : 1.0;
    }
    Vec xp(d), xm(d), gp(d), gm(d);
    for (std::size_t k = 0; k < r_grid.size(); ++k) {
        const double r = r_grid[k];
        double best = std::numeric_limits<double>::infinity();
        for (const auto& m : mids) {
            for (const auto& u : dirs) {
                for (int i = 0; i < d; ++i) {
                    xp[i] = m[i] + 0.5 * r * u[i];
                    xm[i] = m[i] - 0.5 * r * u[i];
                }
                pot.grad_inplace(xp.data(), gp.data());
                pot.grad_inplace(xm.data(), gm.data());
                double quot = 0.0;
                for (int i = 0; i < d; ++i) quot += (gp[i] - gm[i]) * u[i];
                best = std::min(best, quot / r);
            }
        }
        kap[k] = best;
    }
    // sampled kappa need not be monotone; linear interpolation between nodes
    std::vector<double> rg = r_grid;
    auto eval = [rg, kap](double r) {
        if (r <= rg.front()) return kap.front();
        if (r >= rg.back()) return kap.back();
        const auto it = std::upper_bound(rg.begin(), rg.end(), r);
        const std::size_t i = static_cast<std::size_t>(it - rg.begin()) - 1;
        const double w = (r - rg[i]) / (rg[i + 1] - rg[i]);
        return (1.0 - w) * kap[i] + w * kap[i + 1];
    };
    return ConvexityProfile(eval, ConvexityProfile::Source::SampledInfimum, cap);
}

// ---------------------------------------------------------------------------
// validate_scenario
// ---------------------------------------------------------------------------

namespace {

std::string point_str(const Vec& x) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ")";
    return os.str();
}

// symmetric eigenvalue range for d<=2; Rayleigh samples otherwise
std::pair<double, double> eig_range(const std::vector<double>& H, int d, NormalStream& ns,
                                    int n_dirs) {
    if (d == 1) return {H[0], H[0]};
    if (d == 2) {
        const double a = H[0], b = 0.5 * (H[1] + H[2]), c = H[3];
        const double tr = a + c, disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        return {0.5 * tr - disc, 0.5 * tr + disc};
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    Vec u(static_cast<std::size_t>(d));
    for (int k = 0; k < n_dirs; ++k) {
        double nrm2 = 0.0;
        for (auto& v : u) { v = ns.normal(); nrm2 += v * v; }
        double quad = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) quad += u[i] * H[i * d + j] * u[j];
        quad /= nrm2;
        lo = std::min(lo, quad);
        hi = std::max(hi, quad);
    }
    return {lo, hi};
}

double hess_opnorm_diff(const std::vector<double>& A, const std::vector<double>& B, int d) {
    // spectral norm of A-B via eig range (d<=2) or Frobenius upper bound
    std::vector<double> D(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) D[i] = A[i] - B[i];
    if (d == 1) return std::abs(D[0]);
    if (d == 2) {
        const double a = D[0], b = 0.5 * (D[1] + D[2]), c = D[3];
        const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        return std::max(std::abs(0.5 * (a + c) - disc), std::abs(0.5 * (a + c) + disc));
    }
    double fro = 0.0;
    for (double v : D) fro += v * v;
    return std::sqrt(fro);
}

} // namespace

bool ValidationReport::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const ValidationItem& i) { return i.pass; });
}

nlohmann::json ValidationReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : items)
        arr.push_back({{"assumption", it.assumption}, {"pass", it.pass}, {"detail", it.detail}});
    return {{"schema_version", io::schema_version}, {"all_pass", all_pass()}, {"items", arr}};
}

ValidationReport validate_scenario(const Scenario& sc, const ValidationOptions& vo) {
    ValidationReport rep;
    const int d = sc.sim.d;
    const PotentialSpec& U = sc.potential;
    const PerturbationSpec& W = sc.perturbation;
    if (U.d != d)
        throw ConfigError("scenario dimension mismatch between [potential] and [sim]", "d");

    // validation grid (dense for d<=2, Monte-Carlo for larger d); deterministic
    std::vector<Vec> grid;
    if (d <= 2) {
        const int n = vo.points_per_axis;
        if (d == 1) {
            for (int i = 0; i < n; ++i)
                grid.push_back({-vo.L + 2.0 * vo.L * i / (n - 1)});
        } else {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    grid.push_back({-vo.L + 2.0 * vo.L * i / (n - 1),
                                    -vo.L + 2.0 * vo.L * j / (n - 1)});
        }
    } else {
        NormalStream ns(0xA11CE, 7);
        for (int k = 0; k < vo.mc_points; ++k) {
            Vec x(static_cast<std::size_t>(d));
            for (auto& v : x) v = vo.L * (2.0 * ns.uniform() - 1.0);
            grid.push_back(std::move(x));
        }
    }

    // A1-(i): kappa_U in class K
    {
        ValidationItem item{"A1-(i) kappa_U in class K", false, ""};
        try {
            std::vector<double> rg;
            for (int i = 1; i <= 64; ++i) rg.push_back(2.0 * vo.L * i / 64.0);
            const ConvexityProfile prof = profile_of_potential(U, rg);
            const KReport kr = prof.check_class_k();
            item.pass = kr.in_class;
            std::ostringstream os;
            os << "neg_integral=" << kr.neg_integral;
            if (!kr.in_class) os << "; " << kr.reason;
            item.detail = os.str();
        } catch (const std::exception& e) {
            item.detail = e.what();
        }
        rep.items.push_back(item);
    }

    // A1-(ii): |grad W| <= C1W
    {
        ValidationItem item{"A1-(ii) |grad W| <= C1W", false, ""};
        try {
            const double c1w = W.C1W();
            double worst = -1.0;
            Vec witness;
            for (const auto& x : grid) {
                const Vec g = W.grad(x);
                double nrm = 0.0;
                for (double v : g) nrm += v * v;
                nrm = std::sqrt(nrm);
                if (nrm > worst) { worst = nrm; witness = x; }
            }
            item.pass = worst <= c1w + vo.slack * std::max(1.0, c1w);
            std::ostringstream os;
            os << "sup|gradW|=" << worst << " vs C1W=" << c1w << " at " << point_str(witness);
            item.detail = os.str();
        } catch (const std::exception& e) {
            item.detail = e.what();
        }
        rep.items.push_back(item);
    }

    const bool need_a2 = sc.mode == AssumptionMode::A1A2;
    const bool need_a2p = sc.mode == AssumptionMode::A1A2prime ||
                          sc.mode == AssumptionMode::A1A2primeUniform;

    NormalStream dir_stream(0xD12, 3);
    std::vector<std::pair<double, Vec>> eig_lo, eig_hi; // cached per grid point
    if ((need_a2 || need_a2p) && U.has_hess()) {
        for (const auto& x : grid) {
            const auto H = U.hess(x);
            const auto [lo, hi] = eig_range(H, d, dir_stream, 16);
            eig_lo.push_back({lo, x});
            eig_hi.push_back({hi, x});
        }
    }

    if (need_a2) {
        ValidationItem item{"A2 |<u,HessU u>| <= C2U", false, ""};
        if (!U.C2U) {
            item.detail = "required constant C2U not declared";
        } else if (!U.has_hess()) {
            item.detail = "potential provides no Hessian";
        } else {
            double worst = 0.0;
            Vec witness;
            for (std::size_t i = 0; i < eig_lo.size(); ++i) {
                const double mag = std::max(std::abs(eig_lo[i].first), std::abs(eig_hi[i].first));
                if (mag > worst) { worst = mag; witness = eig_lo[i].second; }
            }
            item.pass = worst <= *U.C2U + vo.slack * std::max(1.0, *U.C2U);
            std::ostringstream os;
            os << "sup|<u,HessU u>|=" << worst << " vs C2U=" << *U.C2U << " at "
               << point_str(witness);
            item.detail = os.str();
        }
        rep.items.push_back(item);
    }

    if (need_a2p) {
        ValidationItem item{"A2'-(i) HessU >= alpha", false, ""};
        if (!U.alpha) {
            item.detail = "required constant alpha not declared";
        } else if (!U.has_hess()) {
            item.detail = "potential provides no Hessian";
        } else {
            double worst = std::numeric_limits<double>::infinity();
            Vec witness;
            for (const auto& [lo, x] : eig_lo)
                if (lo < worst) { worst = lo; witness = x; }
            item.pass = worst >= *U.alpha - vo.slack * std::max(1.0, std::abs(*U.alpha));
            if (sc.mode == AssumptionMode::A1A2primeUniform && !(*U.alpha > 0.0)) {
                item.pass = false;
                item.detail = "uniformly-convex mode requires alpha > 0; ";
            }
            std::ostringstream os;
            os << "inf<u,HessU u>=" << worst << " vs alpha=" << *U.alpha << " at "
               << point_str(witness);
            item.detail += os.str();
        }
        rep.items.push_back(item);

        ValidationItem lip{"A2'-(ii) Lip(HessU) <= C3U", false, ""};
        if (!U.C3U) {
            lip.detail = "required constant C3U not declared";
        } else if (!U.has_hess()) {
            lip.detail = "potential provides no Hessian";
        } else {
            // difference quotients along axis steps between neighboring grid points
            double worst = 0.0;
            Vec witness;
            const double step = 2.0 * vo.L / (vo.points_per_axis - 1);
            for (const auto& x : grid) {
                for (int axis = 0; axis < d; ++axis) {
                    Vec y = x;
                    y[axis] += step;
                    const double quot = hess_opnorm_diff(U.hess(y), U.hess(x), d) / step;
                    if (quot > worst) { worst = quot; witness = x; }
                }
            }
            lip.pass = worst <= *U.C3U + vo.slack * std::max(1.0, *U.C3U);
            std::ostringstream os;
            os << "sup diff-quot=" << worst << " vs C3U=" << *U.C3U << " at " << point_str(witness);
            lip.detail = os.str();
        }
        rep.items.push_back(lip);
    }

    // purity spot check (documented contract: callbacks are pure)
    {
        ValidationItem item{"callback purity spot check", false, ""};
        const Vec& x = grid[grid.size() / 2];
        const bool ok = U.value(x) == U.value(x) && U.grad(x) == U.grad(x) &&
                        W.value(x) == W.value(x);
        item.pass = ok;
        item.detail = ok ? "double evaluation identical" : "callback returned differing values";
        rep.items.push_back(item);
    }

    return rep;
}

// ---------------------------------------------------------------------------
// closed_form_oracle
// ---------------------------------------------------------------------------

double OracleBundle::phi(double t, const Vec& x) const {
    const double tau = T - t, s = scale;
    return a * x[0] * std::exp(-s * tau) - (a * a / (2.0 * s)) * (1.0 - std::exp(-2.0 * s * tau));
}

double OracleBundle::dt_phi(double t, const Vec& x) const {
    const double tau = T - t, s = scale;
    return s * a * x[0] * std::exp(-s * tau) + a * a * std::exp(-2.0 * s * tau);
}

Vec OracleBundle::grad_phi(double t) const {
    Vec g(static_cast<std::size_t>(d), 0.0);
    g[0] = a * std::exp(-scale * (T - t));
    return g;
}

Vec OracleBundle::S(double t, const Vec& x) const {
    Vec y = x;
    y[0] += (a / scale) * (1.0 - std::exp(-scale * t));
    return y;
}

Vec OracleBundle::Tmap(const Vec& x) const {
    Vec y = x;
    y[0] -= a / scale;
    return y;
}

double OracleBundle::grad_V(double t) const { return a * std::exp(-scale * t); }

std::optional<OracleBundle> closed_form_oracle(const Scenario& sc) {
    if (sc.potential.family != PotentialSpec::Family::Quadratic) return std::nullopt;
    if (sc.perturbation.family != PerturbationSpec::Family::Linear) return std::nullopt;
    if (!(sc.potential.scale > 0.0)) return std::nullopt;
    OracleBundle ob;
    ob.a = sc.perturbation.a;
    ob.scale = sc.potential.scale;
    ob.T = sc.sim.horizon;
    ob.d = sc.sim.d;
    return ob;
}

// ---------------------------------------------------------------------------
// scenario_constants
// ---------------------------------------------------------------------------

std::vector<double> default_r_grid(double cap, int n) {
    if (!(cap > 0.0) || n < 8) throw ConfigError("default_r_grid: cap > 0 and n >= 8 required");
    std::vector<double> g{1e-3 * cap, 2e-3 * cap, 5e-3 * cap, 1e-2 * cap, 2e-2 * cap};
    for (int i = 1; i <= n; ++i) {
        const double r = cap * static_cast<double>(i) / n;
        if (r > g.back()) g.push_back(r);
    }
    return g;
}

ScenarioConstants scenario_constants(const Scenario& sc, double quad_tol) {
    ConvexityProfile kU_prof = profile_of_potential(sc.potential, default_r_grid());

    ProfileConstants kU;
    if (sc.mode == AssumptionMode::A1A2primeUniform) {
        if (!sc.potential.alpha || !(*sc.potential.alpha > 0.0))
            throw ValidationError("uniformly-convex mode requires declared alpha > 0");
        kU = uniformly_convex_constants(*sc.potential.alpha, kU_prof.domain_cap());
    } else {
        kU = build_constants(kU_prof, quad_tol);
    }

    const double c1w = sc.perturbation.C1W();
    if (c1w == 0.0)
        return ScenarioConstants{kU_prof, kU_prof, kU, kU};

    ConvexityProfile kbar_prof = perturbed_profile(kU_prof, c1w, kU.C);
    ProfileConstants kbar = build_constants(kbar_prof, quad_tol);
    return ScenarioConstants{std::move(kU_prof), std::move(kbar_prof), std::move(kU),
                             std::move(kbar)};
}

// ---------------------------------------------------------------------------
// scenario files
// ---------------------------------------------------------------------------

namespace {

struct Tok {
    std::string section, key, value;
};

bool is_number(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0' && end != s.c_str();
}

} // namespace

Scenario parse_scenario_text(const std::string& text) {
    Scenario sc;
    sc.perturbation.family = PerturbationSpec::Family::Zero;
    bool saw_pot_family = false, saw_mode = false;

    std::string section;
    std::istringstream in(text);
    std::string line;
    std::vector<Tok> toks;
    while (std::getline(in, line)) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            if (tok.front() == '[') {
                if (tok.back() != ']')
                    throw ConfigError("malformed section header '" + tok + "'", tok);
                section = tok.substr(1, tok.size() - 2);
                if (section != "potential" && section != "perturbation" && section != "sim" &&
                    section != "mode")
                    throw ConfigError("unknown section [" + section + "]", section);
                continue;
            }
            const auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected key=value, got '" + tok + "'", tok);
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (section.empty())
                throw ConfigError("key '" + key + "' outside any section", key);
            if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
                val = val.substr(1, val.size() - 2);
            toks.push_back({section, key, val});
        }
    }

    auto num = [](const Tok& t) {
        double v;
        if (!is_number(t.value, v))
            throw ConfigError("key '" + t.key + "': expected a number, got '" + t.value + "'",
                              t.key);
        return v;
    };

    for (const auto& t : toks) {
        if (t.section == "potential") {
            if (t.key == "family") {
                saw_pot_family = true;
                if (t.value == "quadratic") sc.potential.family = PotentialSpec::Family::Quadratic;
                else if (t.value == "quadratic_plus_cosine")
                    sc.potential.family = PotentialSpec::Family::QuadraticPlusCosine;
                else if (t.value == "double_well")
                    sc.potential.family = PotentialSpec::Family::DoubleWell;
                else throw ConfigError("unknown potential family '" + t.value + "'", t.key);
            } else if (t.key == "scale") sc.potential.scale = num(t);
            else if (t.key == "amplitude") sc.potential.amplitude = num(t);
            else if (t.key == "a4") sc.potential.a4 = num(t);
            else if (t.key == "a2") sc.potential.a2 = num(t);
            else if (t.key == "C2U") sc.potential.C2U = num(t);
            else if (t.key == "alpha") sc.potential.alpha = num(t);
            else if (t.key == "C3U") sc.potential.C3U = num(t);
            else throw ConfigError("unknown key '" + t.key + "' in [potential]", t.key);
        } else if (t.section == "perturbation") {
            if (t.key == "family") {
                if (t.value == "zero") sc.perturbation.family = PerturbationSpec::Family::Zero;
                else if (t.value == "linear") sc.perturbation.family = PerturbationSpec::Family::Linear;
                else if (t.value == "smooth_norm")
                    sc.perturbation.family = PerturbationSpec::Family::SmoothNorm;
                else if (t.value == "tanh_ridge")
                    sc.perturbation.family = PerturbationSpec::Family::TanhRidge;
                else throw ConfigError("unknown perturbation family '" + t.value + "'", t.key);
            } else if (t.key == "a") sc.perturbation.a = num(t);
            else if (t.key == "c") sc.perturbation.c = num(t);
            else if (t.key == "C1W") sc.perturbation.C1W_declared = num(t);
            else throw ConfigError("unknown key '" + t.key + "' in [perturbation]", t.key);
        } else if (t.section == "sim") {
            if (t.key == "dt") sc.sim.dt = num(t);
            else if (t.key == "T") sc.sim.horizon = num(t);
            else if (t.key == "n_paths") sc.sim.n_paths = static_cast<std::int64_t>(num(t));
            else if (t.key == "seed") sc.sim.seed = static_cast<std::uint64_t>(num(t));
            else if (t.key == "d") sc.sim.d = static_cast<int>(num(t));
            else throw ConfigError("unknown key '" + t.key + "' in [sim]", t.key);
        } else { // mode
            if (t.key == "assumptions") {
                saw_mode = true;
                if (t.value == "A1-A2") sc.mode = AssumptionMode::A1A2;
                else if (t.value == "A1-A2prime") sc.mode = AssumptionMode::A1A2prime;
                else if (t.value == "A1-A2prime-uniformly-convex")
                    sc.mode = AssumptionMode::A1A2primeUniform;
                else throw ConfigError("unknown assumptions value '" + t.value + "'", t.key);
            } else throw ConfigError("unknown key '" + t.key + "' in [mode]", t.key);
        }
    }

    if (!saw_pot_family) throw ConfigError("missing [potential] family", "family");
    if (!saw_mode) throw ConfigError("missing [mode] assumptions", "assumptions");
    if (!(sc.sim.dt > 0.0)) throw ConfigError("sim dt must be positive", "dt");
    if (!(sc.sim.horizon >= 0.0)) throw ConfigError("sim T must be >= 0", "T");
    if (sc.sim.n_paths < 1) throw ConfigError("sim n_paths must be >= 1", "n_paths");
    if (sc.sim.d < 1) throw ConfigError("sim d must be >= 1", "d");
    sc.potential.d = sc.sim.d;

    // default declared constants for builtin families (overridable in the file)
    PotentialSpec& U = sc.potential;
    if (U.family == PotentialSpec::Family::Quadratic) {
        if (!U.C2U) U.C2U = U.scale;
        if (!U.alpha) U.alpha = U.scale;
        if (!U.C3U) U.C3U = 0.0;
    } else if (U.family == PotentialSpec::Family::QuadraticPlusCosine) {
        if (!U.C2U) U.C2U = 1.0 + std::abs(U.amplitude);
        if (!U.alpha) U.alpha = 1.0 - std::abs(U.amplitude);
        if (!U.C3U) U.C3U = std::abs(U.amplitude);
    }
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path, path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

} // namespace clab
