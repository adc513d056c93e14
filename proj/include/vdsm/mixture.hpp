#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vdsm/checkpoint.hpp"
#include "vdsm/mlp.hpp"
#include "vdsm/primitives.hpp"
#include "vdsm/records.hpp"
#include "vdsm/rng.hpp"

namespace vdsm {

enum class ElboMode { jensen_bound, exact_logsumexp };

std::string elbo_mode_name(ElboMode m);
ElboMode elbo_mode_from_name(const std::string& name);

struct TrainConfig {
    double discount = 1.0;  // censored-loss multiplier in (0,1]
    double lr = 1e-3;
    ElboMode elbo_mode = ElboMode::jensen_bound;
    int epochs = 100;
    int batch_size = 128;
    std::uint64_t seed = 0;
};

// Mixture of K parametric survival primitives behind an input-dependent
// gate. The gate is either the internal softmax net (plain model) or
// supplied externally by a latent front-end. Event times are rescaled by
// the training-set maximum; predictions take raw times.
class MixtureModel {
public:
    // gating_spec.output_dim must be k; shift_spec, when given, produces
    // per-input (eta, beta) raw perturbations and must output 2k.
    MixtureModel(int k, PrimitiveFamily family, std::optional<MlpSpec> gating_spec,
                 RngStream& rng, std::optional<MlpSpec> shift_spec = std::nullopt);

    int k() const { return k_; }
    PrimitiveFamily family() const { return family_; }
    bool has_gating() const { return gating_.has_value(); }
    bool has_shift_head() const { return shift_.has_value(); }

    double time_scale() const { return time_scale_; }
    void set_time_scale(double s);

    // --- pure (frozen-model) evaluation ---
    Vector gate_probs(const Vector& x) const;
    Matrix gate_probs(const Matrix& x) const;
    Vector component_log_pdf(const Vector& x, double t) const;       // K entries, raw t
    Vector component_log_survival(const Vector& x, double t) const;  // K entries, raw t
    double predict_log_survival(const Vector& x, double t) const;
    double predict_log_survival(const Vector& x, double t, const Vector& gate) const;
    double predict_risk(const Vector& x, double t) const;
    double predict_risk(const Vector& x, double t, const Vector& gate) const;

    // --- record-level losses (values; sums over the batch, unnormalized) ---
    double uncensored_loss(const std::vector<SurvivalRecord>& batch, ElboMode mode) const;
    double censored_loss(const std::vector<SurvivalRecord>& batch, ElboMode mode) const;
    // (L_U + discount * L_C) / |batch|
    double dsm_loss(const std::vector<SurvivalRecord>& batch, const TrainConfig& cfg) const;

    // --- training-graph builders ---
    Var gate_log_probs_graph(Tape& tape, Var x);
    Var component_log_pdf_graph(Tape& tape, Var x, const Vector& times_raw);
    Var component_log_survival_graph(Tape& tape, Var x, const Vector& times_raw);
    // full loss with the internal gate
    Var dsm_loss_graph(Tape& tape, const Batch& batch, const TrainConfig& cfg);

    std::vector<ParamTensor*> parameters();

    // natural (eta, beta) per component, in raw time units
    std::vector<std::pair<double, double>> natural_params() const;

    void add_to_checkpoint(Checkpoint& ck) const;
    static MixtureModel from_checkpoint(const Checkpoint& ck);

private:
    int k_;
    PrimitiveFamily family_;
    ParamTensor eta_raw_;   // 1 x K
    ParamTensor beta_raw_;  // 1 x K
    std::optional<Mlp> gating_;
    std::optional<Mlp> shift_;
    double time_scale_ = 1.0;

    // effective raw params per sample (n x K), shift head applied when present
    std::pair<Var, Var> raw_param_matrices(Tape& tape, Var x, Eigen::Index n);
    std::pair<Vector, Vector> raw_param_rows(const Vector& x) const;
    Matrix log_time_matrix(const Vector& times_raw) const;
};

// Loss assembly from already-built gate log-probabilities and component
// log-likelihood matrices (both n x K). Sums over rows.
Var uncensored_loss_graph(Tape& tape, Var gate_log_probs, Var comp_log_pdf, ElboMode mode);
Var censored_loss_graph(Tape& tape, Var gate_log_probs, Var comp_log_survival, ElboMode mode);

}  // namespace vdsm
