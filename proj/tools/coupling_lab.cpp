// Command-line front end: one binary, one scenario file in, one artifact
// directory out.  Subcommands cover the profile constants, the closed-form
// bounds, the reflection-coupling ensemble, the value-function field with its
// HJB residual, the transport-map pipeline, and the full verification suite.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 assumption-validation
// error, 4 numerical failure, 5 verification suite failed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clab/bounds.hpp"
#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/profiles.hpp"
#include "clab/rng.hpp"
#include "clab/scenarios.hpp"
#include "clab/sde.hpp"
#include "clab/transport.hpp"
#include "clab/value.hpp"
#include "clab/verify.hpp"

namespace {

using namespace clab;

struct Args {
    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> dt;
    std::optional<std::int64_t> n_paths;
    std::optional<double> tol;

    double quad_tol() const { return tol.value_or(1e-10); }

    Scenario load() const {
        Scenario sc = load_scenario_file(scenario_path);
        if (seed) sc.sim.seed = *seed;
        if (dt) {
            if (!(*dt > 0.0)) throw ConfigError("--dt must be positive", "dt");
            sc.sim.dt = *dt;
        }
        if (n_paths) {
            if (*n_paths < 1) throw ConfigError("--n-paths must be >= 1", "n_paths");
            sc.sim.n_paths = *n_paths;
        }
        return sc;
    }
};

void write_constants(const Args& args, const ScenarioConstants& scs) {
    io::ensure_dir(args.out_dir);
    io::write_json(args.out_dir + "/constants_kU.json", scs.kU.to_json());
    io::write_json(args.out_dir + "/constants_kbar.json", scs.kbar.to_json());
    {
        std::ofstream f(args.out_dir + "/constants_kU.csv");
        scs.kU.write_csv(f);
    }
    {
        std::ofstream f(args.out_dir + "/constants_kbar.csv");
        scs.kbar.write_csv(f);
    }
}

void print_constants(const char* label, const ProfileConstants& pc) {
    std::printf("%s: R0=%.6g R1=%.6g lambda=%.6g C=%.6g\n", label, pc.R0, pc.R1, pc.lambda,
                pc.C);
}

int cmd_constants(const Args& args) {
    const Scenario sc = args.load();
    const ScenarioConstants scs = scenario_constants(sc, args.quad_tol());
    write_constants(args, scs);
    print_constants("kappa_U  ", scs.kU);
    print_constants("kappa_bar", scs.kbar);
    std::printf("wrote constants_kU.{json,csv} constants_kbar.{json,csv} to %s\n",
                args.out_dir.c_str());
    return 0;
}

int cmd_bounds(const Args& args) {
    const Scenario sc = args.load();
    const ScenarioConstants scs = scenario_constants(sc, args.quad_tol());
    const BoundReport rep = make_bound_report(sc, scs.kU, scs.kbar);
    io::ensure_dir(args.out_dir);
    io::write_json(args.out_dir + "/bounds.json", rep.to_json());
    {
        const BoundInputs in = bound_inputs_from(sc, scs.kU, scs.kbar);
        std::vector<double> ts;
        for (int i = 0; i <= 80; ++i) ts.push_back(sc.sim.horizon * i / 80.0);
        std::ofstream f(args.out_dir + "/envelopes.csv");
        write_envelope_csv(f, in, ts, sc.sim.horizon);
    }
    std::printf("Lipschitz bound [%s]: exp(%.6g) = %.6g (quadrature exponent %.6g)\n",
                rep.lip_case.c_str(), rep.lip.exponent, rep.lip.value, rep.lip.quad_exponent);
    if (std::isfinite(rep.fms_exponent))
        std::printf("comparison constant: exp(%.6g) = %.6g\n", rep.fms_exponent, rep.fms_value);
    std::printf("wrote bounds.json envelopes.csv to %s\n", args.out_dir.c_str());
    return 0;
}

int cmd_couple(const Args& args) {
    const Scenario sc = args.load();
    const ScenarioConstants scs = scenario_constants(sc, args.quad_tol());
    // contraction rates come from the distortion metric of the raw profile; the
    // uniformly-convex shortcut constants describe synchronous-coupling envelopes
    const ProfileConstants metric = scs.kU.uniformly_convex_mode
                                        ? build_constants(scs.kU_profile, args.quad_tol())
                                        : scs.kU;
    const DriftField drift = langevin_drift(sc);
    const int d = sc.sim.d;
    PairInit init = [d](std::int64_t, NormalStream&, double* x, double* xhat) {
        for (int i = 0; i < d; ++i) x[i] = xhat[i] = 0.0;
        x[0] = -0.5;
        xhat[0] = 0.5;
    };
    std::vector<double> ts;
    for (double t = 0.25; t <= sc.sim.horizon + 1e-12; t += 0.25) ts.push_back(t);
    if (ts.empty()) ts.push_back(sc.sim.horizon);
    const CoupledEnsemble ens =
        simulate_reflection_coupling(drift, init, ts.back(), sc.sim.dt, sc.sim.seed,
                                     sc.sim.n_paths, metric, {}, ts);
    const auto rows = contraction_report(ens, metric);
    io::ensure_dir(args.out_dir);
    {
        std::ofstream f(args.out_dir + "/contraction.csv");
        write_contraction_csv(f, rows);
    }
    const auto& last = rows.back();
    std::printf("t=%.6g: mean_f=%.6g (envelope %.6g), distinct=%.6g (envelope %.6g)\n", last.t,
                last.mean_f_delta, last.envelope_f, last.frac_distinct, last.envelope_q);
    std::printf("wrote contraction.csv to %s\n", args.out_dir.c_str());
    return 0;
}

int cmd_value(const Args& args) {
    const Scenario sc = args.load();
    const double T = sc.sim.horizon;
    std::vector<double> ts{0.0, 0.25 * T, 0.5 * T, 0.75 * T};
    std::vector<Vec> points;
    for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) points.push_back(Vec{x});
    const auto ests =
        estimate_grad_phi_times(sc, ts, T, points, sc.sim.n_paths, sc.sim.seed, 0.05, sc.sim.dt);
    io::ensure_dir(args.out_dir);
    {
        std::ofstream f(args.out_dir + "/field.csv");
        write_field_csv(f, ests);
    }
    const HjbGrid grid = uniform_hjb_grid(T / 8.0, T - T / 8.0, 17, -2.0, 2.0, 17);
    ResidualTable table;
    if (const auto ob = closed_form_oracle(sc)) {
        table = hjb_residual(sc, oracle_hjb_field(*ob), grid, 0, sc.sim.seed);
    } else {
        table = hjb_residual(sc, HjbField{}, grid, sc.sim.n_paths, sc.sim.seed);
    }
    {
        std::ofstream f(args.out_dir + "/hjb.csv");
        write_residual_csv(f, table);
    }
    std::printf("HJB residual: max |residual| = %.6g, within budget: %s\n",
                table.max_abs_residual, table.within_budget ? "yes" : "no");
    std::printf("wrote field.csv hjb.csv to %s\n", args.out_dir.c_str());
    return table.within_budget ? 0 : 5;
}

int cmd_transport(const Args& args) {
    const Scenario sc = args.load();
    const ScenarioConstants scs = scenario_constants(sc, args.quad_tol());
    const BoundInputs in = bound_inputs_from(sc, scs.kU, scs.kbar);
    const std::vector<double> anchors = default_anchors();

    ValueField field;
    double T_max = 0.0, ode_dt = 0.0;
    std::optional<std::vector<double>> samples;
    if (const auto ob = closed_form_oracle(sc)) {
        field = oracle_value_field(*ob);
        T_max = flow_horizon_rule(in, 1e-4);
        ode_dt = 5e-3;
        samples.emplace(10000);
        NormalStream ns(sc.sim.seed, (1ull << 40) + 1);
        const double sd = 1.0 / std::sqrt(ob->scale);
        for (auto& v : *samples) v = sd * ns.normal();
    } else {
        FrozenFieldOptions fopts;
        fopts.tau_max = std::min(flow_horizon_rule(in, 1e-4), 64.0);
        fopts.dtau = 0.2;
        fopts.x_lo = -9.0;
        fopts.x_hi = 9.0;
        fopts.nx = 25;
        fopts.n_samples = sc.sim.n_paths;
        fopts.seed = sc.sim.seed;
        fopts.fd_step = 0.05;
        fopts.dt = std::max(sc.sim.dt, 5e-3);
        field = frozen_mc_field(sc, fopts);
        T_max = fopts.tau_max;
        ode_dt = std::max(sc.sim.dt, 5e-3);
    }
    const FlowMap flow = integrate_flow(sc, field, anchors, T_max, ode_dt, 5e-3);
    const TransportMaps maps = extract_transport_maps(flow);
    const TransportReport rep =
        transport_report(sc, field, scs.kU, scs.kbar, flow, samples ? &*samples : nullptr);

    io::ensure_dir(args.out_dir);
    {
        std::ofstream f(args.out_dir + "/flow.csv");
        write_flow_csv(f, flow);
    }
    {
        std::ofstream f(args.out_dir + "/map.csv");
        write_map_csv(f, maps);
    }
    io::write_json(args.out_dir + "/transport.json", rep.to_json());
    std::printf("flow horizon %.6g (converged: %s), empirical Lip(T) = %.6g, bound = %.6g\n",
                rep.T_max, rep.flow_converged ? "yes" : "no", rep.lip_T_emp, rep.lip_bound);
    if (rep.ks_pushforward >= 0.0)
        std::printf("pushforward KS distance = %.6g\n", rep.ks_pushforward);
    std::printf("wrote flow.csv map.csv transport.json to %s\n", args.out_dir.c_str());
    return 0;
}

int cmd_verify(const Args& args) {
    const Scenario sc = args.load();
    VerifyOptions vo;
    vo.artifact_dir = args.out_dir;
    vo.quad_tol = args.quad_tol();
    if (args.n_paths)
        vo.budget_scale = static_cast<double>(*args.n_paths) /
                          static_cast<double>(vo.coupling_paths);
    const VerifySummary vs = run_verification(sc, vo);
    for (const auto& c : vs.checks) {
        std::printf("[%s] %-34s measured=%-12.6g tolerance=%-12.6g (%.2fs)\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured, c.tolerance,
                    c.seconds);
        if (!c.pass) std::printf("       %s\n", c.detail.c_str());
    }
    int passed = 0;
    for (const auto& c : vs.checks) passed += c.pass ? 1 : 0;
    std::printf("verification: %d/%zu checks passed\n", passed, vs.checks.size());
    return vs.all_pass() ? 0 : 5;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for coupling-based Lipschitz transport maps"};
    app.require_subcommand(1);

    Args args;
    app.add_option("--scenario", args.scenario_path, "scenario file")->required();
    app.add_option("--out", args.out_dir, "artifact directory (default: out)");
    app.add_option("--seed", args.seed, "override the scenario RNG seed");
    app.add_option("--dt", args.dt, "override the Euler-Maruyama step");
    app.add_option("--n-paths", args.n_paths,
                   "override the path count (verify: scales all Monte Carlo budgets "
                   "proportionally, 100000 = default budget)");
    app.add_option("--tol", args.tol, "quadrature tolerance for profile constants");

    auto* c_constants = app.add_subcommand("constants", "distortion-profile constants");
    auto* c_bounds = app.add_subcommand("bounds", "closed-form envelopes and bounds");
    auto* c_couple = app.add_subcommand("couple", "reflection-coupling contraction run");
    auto* c_value = app.add_subcommand("value", "value-function field and HJB residual");
    auto* c_transport = app.add_subcommand("transport", "flow map, transport map, diagnostics");
    auto* c_verify = app.add_subcommand("verify", "full verification suite");
    for (auto* sub : {c_constants, c_bounds, c_couple, c_value, c_transport, c_verify})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_constants->parsed()) return cmd_constants(args);
        if (c_bounds->parsed()) return cmd_bounds(args);
        if (c_couple->parsed()) return cmd_couple(args);
        if (c_value->parsed()) return cmd_value(args);
        if (c_transport->parsed()) return cmd_transport(args);
        if (c_verify->parsed()) return cmd_verify(args);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const clab::ConfigError& e) {
        std::cerr << "config error: " << e.what();
        if (!e.offending_key.empty()) std::cerr << " (key: " << e.offending_key << ")";
        std::cerr << "\n";
        return 2;
    } catch (const clab::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const clab::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
