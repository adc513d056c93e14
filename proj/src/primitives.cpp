#include "vdsm/primitives.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

std::string family_name(PrimitiveFamily f) {
    return f == PrimitiveFamily::weibull ? "weibull" : "lognormal";
}

PrimitiveFamily family_from_name(const std::string& name) {
    if (name == "weibull") return PrimitiveFamily::weibull;
    if (name == "lognormal" || name == "log_normal") return PrimitiveFamily::log_normal;
    throw std::invalid_argument("unknown primitive family: " + name);
}

PrimitiveParams primitive_from_natural(PrimitiveFamily f, double eta, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("primitive_from_natural: beta must be positive");
    PrimitiveParams p;
    p.beta_raw = inv_softplus(beta);
    if (f == PrimitiveFamily::weibull) {
        if (!(eta > 0.0))
            throw std::invalid_argument("primitive_from_natural: Weibull eta must be positive");
        p.eta_raw = inv_softplus(eta);
    } else {
        p.eta_raw = eta;
    }
    return p;
}

double primitive_eta(PrimitiveFamily f, const PrimitiveParams& p) {
    return f == PrimitiveFamily::weibull ? softplus(p.eta_raw) : p.eta_raw;
}

double primitive_beta(PrimitiveFamily, const PrimitiveParams& p) { return softplus(p.beta_raw); }

namespace {
void check_time(double t) {
    if (!(t > 0.0)) throw std::invalid_argument("time must be positive");
}
}  // namespace

double log_pdf(PrimitiveFamily f, const PrimitiveParams& p, double t) {
    check_time(t);
    const double lt = std::log(t);
    if (f == PrimitiveFamily::weibull) {
        const double eta = softplus(p.eta_raw);
        const double beta = softplus(p.beta_raw);
        const double d = lt - std::log(beta);
        // ln f = ln eta - ln beta + (eta-1)(ln t - ln beta) - (t/beta)^eta
        return std::log(eta) - std::log(beta) + (eta - 1.0) * d - std::exp(eta * d);
    }
    const double eta = p.eta_raw;
    const double beta = softplus(p.beta_raw);
    const double s = (lt - eta) / beta;
    return -lt - std::log(beta) - 0.5 * kLnTwoPi - 0.5 * s * s;
}

double log_survival(PrimitiveFamily f, const PrimitiveParams& p, double t) {
    check_time(t);
    const double lt = std::log(t);
    if (f == PrimitiveFamily::weibull) {
        const double eta = softplus(p.eta_raw);
        const double beta = softplus(p.beta_raw);
        // ln S = -(t/beta)^eta, evaluated in the log domain
        return -std::exp(eta * (lt - std::log(beta)));
    }
    const double eta = p.eta_raw;
    const double beta = softplus(p.beta_raw);
    return log_half_erfc((lt - eta) / (std::sqrt(2.0) * beta));
}

namespace {
void check_graph_shapes(Tape& tape, Var a, Var b, Var c) {
    if (tape.rows(a) != tape.rows(b) || tape.rows(a) != tape.rows(c) ||
        tape.cols_of(a) != tape.cols_of(b) || tape.cols_of(a) != tape.cols_of(c))
        throw std::invalid_argument("primitive graph: shape mismatch");
}
}  // namespace

Var log_pdf_graph(Tape& tape, PrimitiveFamily f, Var eta_raw, Var beta_raw, Var log_t) {
    check_graph_shapes(tape, eta_raw, beta_raw, log_t);
    if (f == PrimitiveFamily::weibull) {
        Var eta = tape.softplus(eta_raw);
        Var beta = tape.softplus(beta_raw);
        Var d = tape.sub(log_t, tape.log(beta));
        Var hazard_exp = tape.exp(tape.mul(eta, d));
        Var shape_term = tape.mul(tape.add_scalar(eta, -1.0), d);
        return tape.sub(tape.add(tape.sub(tape.log(eta), tape.log(beta)), shape_term), hazard_exp);
    }
    Var beta = tape.softplus(beta_raw);
    Var s = tape.div(tape.sub(log_t, eta_raw), beta);
    Var quad = tape.scale(tape.square(s), 0.5);
    Var base = tape.add_scalar(tape.add(log_t, tape.log(beta)), 0.5 * kLnTwoPi);
    return tape.neg(tape.add(base, quad));
}

Var log_survival_graph(Tape& tape, PrimitiveFamily f, Var eta_raw, Var beta_raw, Var log_t) {
    check_graph_shapes(tape, eta_raw, beta_raw, log_t);
    if (f == PrimitiveFamily::weibull) {
        Var eta = tape.softplus(eta_raw);
        Var beta = tape.softplus(beta_raw);
        Var d = tape.sub(log_t, tape.log(beta));
        return tape.neg(tape.exp(tape.mul(eta, d)));
    }
    Var beta = tape.softplus(beta_raw);
    Var s = tape.scale(tape.div(tape.sub(log_t, eta_raw), beta), 1.0 / std::sqrt(2.0));
    return tape.log_half_erfc(s);
}

}  // namespace vdsm
