#include "clab/bounds.hpp"

#include <cmath>
#include <numbers>

#include "clab/errors.hpp"
#include "clab/io.hpp"
#include "clab/quadrature.hpp"

namespace clab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

bool declared(double v) { return std::isfinite(v); }

void need(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

void need_profile(const BoundInputs& in, bool kU_needed) {
    need(in.lambda_kbar > 0.0 && in.C_kbar > 0.0,
         "kappa-bar profile constants (lambda, C) must be positive");
    if (kU_needed)
        need(in.lambda_kU > 0.0 && in.C_kU > 0.0,
             "kappa_U profile constants (lambda, C) must be positive");
}

// relative slack for "quadrature must not exceed the closed form" assertions
double slack_for(double closed, double quad_abs_err) {
    return 1e-7 * std::max(1.0, std::abs(closed)) + 10.0 * quad_abs_err;
}

// int_0^X w(t) q_t dt with the 1/sqrt(t) endpoint handled by substitution and the
// branch point of q at 1/(2 lambda) used as a split point
template <class W>
quad::Result integrate_q_weighted(double lambda, double C, W&& w, double X) {
    auto f = [&](double t) { return w(t) * q_kernel(lambda, C, t); };
    const double b = 0.5 / lambda;
    if (X <= b) return quad::integrate_sqrt_singularity(f, 0.0, X);
    const quad::Result head = quad::integrate_sqrt_singularity(f, 0.0, b);
    const quad::Result tail = quad::integrate(f, b, X);
    return {head.value + tail.value, head.abs_error + tail.abs_error};
}

} // namespace

double exp_diff_quot(double a, double b, double tau) {
    if (std::abs(b - a) < 1e-10 * std::max(std::abs(a), 1e-300))
        return tau * std::exp(-a * tau);
    return (std::exp(-a * tau) - std::exp(-b * tau)) / (b - a);
}

std::string to_string(HessCase c) {
    switch (c) {
    case HessCase::A2: return "A2";
    case HessCase::A2prime: return "A2prime";
    case HessCase::A2primePositiveAlpha: return "A2prime-positive-alpha";
    }
    return "?";
}

std::string to_string(LipCase c) {
    switch (c) {
    case LipCase::Thm_i: return "Thm2.3-i";
    case LipCase::Thm_ii: return "Thm2.3-ii";
    case LipCase::Eq2: return "Thm2.3-eq2";
    }
    return "?";
}

HessCase hess_case_of(AssumptionMode mode) {
    switch (mode) {
    case AssumptionMode::A1A2: return HessCase::A2;
    case AssumptionMode::A1A2prime: return HessCase::A2prime;
    case AssumptionMode::A1A2primeUniform: return HessCase::A2primePositiveAlpha;
    }
    return HessCase::A2prime;
}

LipCase lip_case_of(AssumptionMode mode) {
    switch (mode) {
    case AssumptionMode::A1A2: return LipCase::Thm_i;
    case AssumptionMode::A1A2prime: return LipCase::Thm_ii;
    case AssumptionMode::A1A2primeUniform: return LipCase::Eq2;
    }
    return LipCase::Thm_ii;
}

BoundInputs bound_inputs_from(const Scenario& sc, const ProfileConstants& kU,
                              const ProfileConstants& kbar) {
    BoundInputs in;
    in.C1W = sc.perturbation.C1W();
    const auto& pot = sc.potential;
    if (pot.C2U) in.C2U = *pot.C2U;
    if (pot.C3U) in.C3U = *pot.C3U;
    if (pot.alpha) in.alpha = *pot.alpha;
    in.lambda_kU = kU.lambda;
    in.C_kU = kU.C;
    in.lambda_kbar = kbar.lambda;
    in.C_kbar = kbar.C;
    in.mode = sc.mode;
    return in;
}

double gradient_envelope(const BoundInputs& in, double t, double T) {
    need(T >= t, "gradient_envelope needs t <= T");
    need(in.C1W >= 0.0, "C1W must be nonnegative");
    const double tau = T - t;
    if (in.mode == AssumptionMode::A1A2primeUniform) {
        need(declared(in.alpha) && in.alpha > 0.0,
             "uniformly convex gradient envelope needs alpha > 0");
        return std::exp(-in.alpha * tau) * in.C1W;
    }
    need(in.lambda_kU > 0.0 && in.C_kU > 0.0,
         "generic gradient envelope needs kappa_U profile constants");
    return in.C1W * std::exp(-in.lambda_kU * tau) / in.C_kU;
}

double hessian_envelope(const BoundInputs& in, double t, double T, HessCase c) {
    need(T >= t, "hessian_envelope needs t <= T");
    need(in.C1W >= 0.0, "C1W must be nonnegative");
    if (in.C1W == 0.0) return 0.0; // every term carries C1W; avoids 0 * q_0 at t = T
    need_profile(in, c != HessCase::A2primePositiveAlpha);

    const double tau = T - t;
    const double l = in.lambda_kbar, C = in.C_kbar, lU = in.lambda_kU;
    const double q = q_kernel(l, C, tau);

    switch (c) {
    case HessCase::A2: {
        need(declared(in.C2U) && in.C2U >= 0.0, "A2 Hessian envelope needs C2U");
        const double boost = std::exp(lU / (2.0 * l));
        const double head = boost * std::exp(-lU * tau) / (2.0 * std::sqrt(kPi) * l * C);
        const double mid = std::sqrt(l) * boost / (std::sqrt(kPi) * C) * exp_diff_quot(l, lU, tau);
        return 2.0 * in.C1W * ((in.C2U / in.C_kU) * (head + mid) + q);
    }
    case HessCase::A2prime: {
        need(declared(in.C3U) && in.C3U >= 0.0, "A2' Hessian envelope needs C3U");
        need(declared(in.alpha), "A2' Hessian envelope needs alpha");
        const double boost = std::exp(lU / (2.0 * l));
        const double head = std::exp(-lU * tau) / (2.0 * std::sqrt(kPi) * l * C);
        const double mid = std::sqrt(l) / (std::sqrt(kPi) * C) * exp_diff_quot(l, lU, tau);
        const double curv = in.C3U * exp_diff_quot(l, lU, tau) / C;
        return (in.C1W / in.C_kU) * (curv + 2.0 * std::abs(in.alpha) * boost * (head + mid)) +
               2.0 * in.C1W * q;
    }
    case HessCase::A2primePositiveAlpha: {
        need(declared(in.C3U) && in.C3U >= 0.0, "positive-alpha Hessian envelope needs C3U");
        need(declared(in.alpha) && in.alpha > 0.0,
             "positive-alpha Hessian envelope needs alpha > 0");
        const double curv = (in.C3U / C) * exp_diff_quot(l, 2.0 * in.alpha, tau);
        return in.C1W * (curv + 2.0 * std::exp(-in.alpha * tau) * q);
    }
    }
    return 0.0;
}

LipschitzResult lipschitz_bound(const BoundInputs& in, LipCase c) {
    LipschitzResult out;
    out.case_used = c;
    need(in.C1W >= 0.0, "C1W must be nonnegative");

    const double l = in.lambda_kbar, C = in.C_kbar, lU = in.lambda_kU;
    HessCase hc = HessCase::A2prime;
    double exponent = 0.0;
    double min_rate = l; // slowest decay rate of the envelope, for the tail cutoff

    switch (c) {
    case LipCase::Thm_i: {
        need_profile(in, true);
        need(declared(in.C2U) && in.C2U >= 0.0, "Lipschitz case (i) needs C2U");
        hc = HessCase::A2;
        const double K = 1.0 + 1.0 / (2.0 * std::sqrt(l));
        exponent = (2.0 * in.C1W / (std::sqrt(kPi * l) * C)) *
                   (K * in.C2U * std::exp(lU / (2.0 * l)) / (lU * in.C_kU) + kSqrt2);
        min_rate = std::min(l, lU);
        break;
    }
    case LipCase::Thm_ii: {
        need_profile(in, true);
        need(declared(in.C3U) && in.C3U >= 0.0, "Lipschitz case (ii) needs C3U");
        need(declared(in.alpha), "Lipschitz case (ii) needs alpha");
        hc = HessCase::A2prime;
        const double K2 = 2.0 + 1.0 / std::sqrt(l);
        exponent = (in.C1W / C) *
                   (in.C3U / (in.C_kU * l * lU) +
                    K2 * std::abs(in.alpha) * std::exp(lU / (2.0 * l)) /
                        (in.C_kU * lU * std::sqrt(kPi * l)) +
                    2.0 * kSqrt2 / std::sqrt(kPi * l));
        min_rate = std::min(l, lU);
        break;
    }
    case LipCase::Eq2: {
        need_profile(in, false);
        need(declared(in.C3U) && in.C3U >= 0.0, "Lipschitz improved bound needs C3U");
        need(declared(in.alpha) && in.alpha > 0.0, "Lipschitz improved bound needs alpha > 0");
        hc = HessCase::A2primePositiveAlpha;
        exponent = (in.C1W / C) *
                   (in.C3U / (2.0 * l * in.alpha) + kSqrt2 / std::sqrt(kPi * l) +
                    std::sqrt(2.0 * l) / std::sqrt(kPi * std::numbers::e * (in.alpha + l)));
        min_rate = std::min(l, 2.0 * in.alpha);
        break;
    }
    }

    // recompute the exponent as the integral of the matching Hessian envelope; the
    // closed form above must dominate (it only ever discards positive terms)
    auto env = [&](double tau) { return hessian_envelope(in, 0.0, tau, hc); };
    const double b = 0.5 / l;
    const double X = b + 60.0 / min_rate;
    const quad::Result head = quad::integrate_sqrt_singularity(env, 0.0, b);
    const quad::Result body = quad::integrate(env, b, X);
    const double tail = env(X) / min_rate; // envelope decays at least at min_rate past X
    out.exponent = exponent;
    out.value = std::exp(exponent);
    out.quad_exponent = head.value + body.value + tail;
    out.residual = out.exponent - out.quad_exponent;
    out.consistent =
        out.residual >= -slack_for(out.exponent, head.abs_error + body.abs_error);
    if (!out.consistent)
        throw NumericalError("quadrature of the Hessian envelope exceeds the closed-form "
                             "Lipschitz exponent (" +
                             io::fmt(out.quad_exponent) + " > " + io::fmt(out.exponent) +
                             ", case " + to_string(c) + ")");
    return out;
}

LemmaA1Result lemma_a1_integrals(double lambda_kU, double lambda_kbar, double C_kbar,
                                 double alpha, double t, double T) {
    need(lambda_kU > 0.0, "kernel integrals need lambda_kU > 0");
    need(lambda_kbar > 0.0 && C_kbar > 0.0, "kernel integrals need kappa-bar constants");
    need(alpha >= 0.0, "kernel integrals need alpha >= 0");
    need(T >= t, "kernel integrals need t <= T");

    const double l = lambda_kbar, C = C_kbar, lU = lambda_kU;
    const double tau = T - t;
    LemmaA1Result out;

    // item 1: int_0^tau e^{-lU (tau - u)} q_u du
    {
        const double pre = std::exp(lU / (2.0 * l)) / C;
        out.rhs[0] = pre * (std::exp(-lU * tau) / std::sqrt(2.0 * kPi * l) +
                            std::sqrt(l / (2.0 * kPi)) * exp_diff_quot(l, lU, tau));
        auto w = [&](double u) { return std::exp(-lU * (tau - u)); };
        const quad::Result r = integrate_q_weighted(l, C, w, tau);
        out.lhs[0] = r.value;
        out.residual[0] = out.rhs[0] - out.lhs[0];
        if (out.residual[0] < -slack_for(out.rhs[0], r.abs_error))
            throw NumericalError("first kernel integral exceeds its closed-form bound");
    }

    // items 2 and 3: int_0^inf e^{-a u} q_u du for a = alpha and a = 0
    for (int item = 1; item <= 2; ++item) {
        const double a = (item == 1) ? alpha : 0.0;
        out.rhs[item] = (item == 2)
                            ? kSqrt2 / (C * std::sqrt(kPi * l))
                            : 1.0 / (C * std::sqrt(2.0 * kPi * l)) +
                                  std::sqrt(l) /
                                      (C * std::sqrt(2.0 * kPi * std::numbers::e) * (a + l));
        const double X = 0.5 / l + 60.0 / (a + l);
        auto w = [&](double u) { return std::exp(-a * u); };
        const quad::Result r = integrate_q_weighted(l, C, w, X);
        // analytic remainder of the exponential branch past the cutoff
        const double rest = std::sqrt(l / (2.0 * kPi)) * std::exp(0.5 - (a + l) * X) /
                            (C * (a + l));
        out.lhs[item] = r.value + rest;
        out.residual[item] = out.rhs[item] - out.lhs[item];
        if (out.residual[item] < -slack_for(out.rhs[item], r.abs_error))
            throw NumericalError((item == 1 ? std::string("second") : std::string("third")) +
                                 " kernel integral exceeds its closed-form bound");
    }
    return out;
}

double fms_comparison_exponent(double C1W, double alpha, double C3U) {
    need(alpha > 0.0, "comparison constant needs alpha > 0");
    need(C1W >= 0.0 && C3U >= 0.0, "comparison constant needs C1W, C3U >= 0");
    return 10.0 * C1W * (1.0 / std::sqrt(alpha) + C1W / alpha + C3U / (alpha * alpha));
}

double fms_comparison(double C1W, double alpha, double C3U) {
    return std::exp(fms_comparison_exponent(C1W, alpha, C3U));
}

BoundReport make_bound_report(const Scenario& sc, const ProfileConstants& kU,
                              const ProfileConstants& kbar) {
    BoundReport rep;
    rep.inputs = bound_inputs_from(sc, kU, kbar);
    const HessCase hc = hess_case_of(sc.mode);
    const LipCase lc = lip_case_of(sc.mode);
    rep.hess_case = to_string(hc);
    rep.lip_case = to_string(lc);
    rep.lip = lipschitz_bound(rep.inputs, lc);
    if (declared(rep.inputs.alpha) && rep.inputs.alpha > 0.0 && declared(rep.inputs.C3U)) {
        rep.fms_exponent = fms_comparison_exponent(rep.inputs.C1W, rep.inputs.alpha,
                                                   rep.inputs.C3U);
        rep.fms_value = std::exp(rep.fms_exponent);
    }
    rep.lemma_alpha_used = (declared(rep.inputs.alpha) && rep.inputs.alpha > 0.0)
                               ? rep.inputs.alpha
                               : rep.inputs.lambda_kbar;
    rep.lemma_a1 = lemma_a1_integrals(rep.inputs.lambda_kU, rep.inputs.lambda_kbar,
                                      rep.inputs.C_kbar, rep.lemma_alpha_used, 0.0,
                                      sc.sim.horizon);
    return rep;
}

nlohmann::json BoundReport::to_json() const {
    auto opt = [](double v) {
        return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["schema_version"] = io::schema_version;
    j["inputs"] = {{"C1W", inputs.C1W},
                   {"C2U", opt(inputs.C2U)},
                   {"C3U", opt(inputs.C3U)},
                   {"alpha", opt(inputs.alpha)},
                   {"lambda_kU", inputs.lambda_kU},
                   {"C_kU", inputs.C_kU},
                   {"lambda_kbar", inputs.lambda_kbar},
                   {"C_kbar", inputs.C_kbar},
                   {"mode", to_string(inputs.mode)}};
    j["hess_case"] = hess_case;
    j["lip_case"] = lip_case;
    j["lipschitz"] = {{"exponent", lip.exponent},
                      {"value", opt(lip.value)},
                      {"quad_exponent", lip.quad_exponent},
                      {"residual", lip.residual},
                      {"consistent", lip.consistent}};
    j["comparison"] = {{"exponent", opt(fms_exponent)}, {"value", opt(fms_value)}};
    j["kernel_integrals"] = {{"closed", {lemma_a1.rhs[0], lemma_a1.rhs[1], lemma_a1.rhs[2]}},
                             {"quadrature", {lemma_a1.lhs[0], lemma_a1.lhs[1], lemma_a1.lhs[2]}},
                             {"residual",
                              {lemma_a1.residual[0], lemma_a1.residual[1], lemma_a1.residual[2]}},
                             {"alpha_used", lemma_alpha_used}};
    return j;
}

void write_envelope_csv(std::ostream& out, const BoundInputs& in, const std::vector<double>& ts,
                        double T) {
    const HessCase hc = hess_case_of(in.mode);
    out << "t,grad_env,hess_env\n";
    for (double t : ts) {
        out << io::fmt(t) << ',' << io::fmt(gradient_envelope(in, t, T)) << ','
            << io::fmt(hessian_envelope(in, t, T, hc)) << '\n';
    }
}

} // namespace clab
