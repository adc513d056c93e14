#pragma once

#include <string>

#include "vdsm/tape.hpp"

namespace vdsm {

enum class PrimitiveFamily { weibull, log_normal };

std::string family_name(PrimitiveFamily f);
PrimitiveFamily family_from_name(const std::string& name);

// Unconstrained parameterization of one mixture component. Positivity is
// imposed through softplus: Weibull needs eta > 0 and beta > 0; Log-Normal
// needs beta > 0 while eta is the unconstrained location of ln t.
struct PrimitiveParams {
    double eta_raw = 0.0;
    double beta_raw = 0.0;
};

PrimitiveParams primitive_from_natural(PrimitiveFamily f, double eta, double beta);
double primitive_eta(PrimitiveFamily f, const PrimitiveParams& p);
double primitive_beta(PrimitiveFamily f, const PrimitiveParams& p);

// ln f(t); differentiable in the raw parameters through the graph builders.
double log_pdf(PrimitiveFamily f, const PrimitiveParams& p, double t);

// ln S(t) = ln P(T > t) <= 0.
double log_survival(PrimitiveFamily f, const PrimitiveParams& p, double t);

// Batched graph builders. All inputs are (n,k): raw parameter entries per
// sample/component, and log_t the precomputed ln(t_i) tiled across columns.
Var log_pdf_graph(Tape& tape, PrimitiveFamily f, Var eta_raw, Var beta_raw, Var log_t);
Var log_survival_graph(Tape& tape, PrimitiveFamily f, Var eta_raw, Var beta_raw, Var log_t);

}  // namespace vdsm
