#include "vdsm/mixture.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

std::string elbo_mode_name(ElboMode m) {
    return m == ElboMode::jensen_bound ? "jensen_bound" : "exact_logsumexp";
}

ElboMode elbo_mode_from_name(const std::string& name) {
    if (name == "jensen_bound") return ElboMode::jensen_bound;
    if (name == "exact_logsumexp") return ElboMode::exact_logsumexp;
    throw std::invalid_argument("unknown elbo mode: " + name);
}

MixtureModel::MixtureModel(int k, PrimitiveFamily family, std::optional<MlpSpec> gating_spec,
                           RngStream& rng, std::optional<MlpSpec> shift_spec)
    : k_(k), family_(family) {
    if (k_ < 1) throw std::invalid_argument("MixtureModel: k must be >= 1");
    // eta = beta = 1 at start
    const double raw_one = inv_softplus(1.0);
    Matrix e = Matrix::Constant(1, k_, family_ == PrimitiveFamily::weibull ? raw_one : 0.0);
    Matrix b = Matrix::Constant(1, k_, raw_one);
    eta_raw_ = ParamTensor("components.eta_raw", std::move(e));
    beta_raw_ = ParamTensor("components.beta_raw", std::move(b));
    if (gating_spec) {
        if (gating_spec->output_dim != k_)
            throw std::invalid_argument("MixtureModel: gating output_dim must equal k");
        gating_.emplace(*gating_spec, rng, "gating");
    }
    if (shift_spec) {
        if (shift_spec->output_dim != 2 * k_)
            throw std::invalid_argument("MixtureModel: shift head output_dim must equal 2k");
        shift_.emplace(*shift_spec, rng, "shift");
        // start as a no-op perturbation
        for (ParamTensor* p : shift_->parameters()) p->value.setZero();
    }
}

void MixtureModel::set_time_scale(double s) {
    if (!(s > 0.0)) throw std::invalid_argument("time scale must be positive");
    time_scale_ = s;
}

Matrix MixtureModel::gate_probs(const Matrix& x) const {
    if (!gating_) throw std::invalid_argument("MixtureModel: no internal gating net");
    Matrix logits = gating_->forward(x);
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

Vector MixtureModel::gate_probs(const Vector& x) const {
    Matrix out = gate_probs(Matrix(x.transpose()));
    return out.row(0).transpose();
}

std::pair<Vector, Vector> MixtureModel::raw_param_rows(const Vector& x) const {
    Vector e = eta_raw_.value.row(0).transpose();
    Vector b = beta_raw_.value.row(0).transpose();
    if (shift_) {
        Vector s = shift_->forward(x);
        e += s.head(k_);
        b += s.tail(k_);
    }
    return {e, b};
}

Vector MixtureModel::component_log_pdf(const Vector& x, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("time must be positive");
    auto [e, b] = raw_param_rows(x);
    const double ts = t / time_scale_;
    Vector out(k_);
    for (int k = 0; k < k_; ++k)
        out(k) = log_pdf(family_, PrimitiveParams{e(k), b(k)}, ts);
    return out;
}

Vector MixtureModel::component_log_survival(const Vector& x, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("time must be positive");
    auto [e, b] = raw_param_rows(x);
    const double ts = t / time_scale_;
    Vector out(k_);
    for (int k = 0; k < k_; ++k)
        out(k) = log_survival(family_, PrimitiveParams{e(k), b(k)}, ts);
    return out;
}

double MixtureModel::predict_log_survival(const Vector& x, double t, const Vector& gate) const {
    if (gate.size() != k_) throw std::invalid_argument("gate size must equal k");
    Vector ls = component_log_survival(x, t);
    std::vector<double> terms(static_cast<std::size_t>(k_));
    for (int k = 0; k < k_; ++k)
        terms[static_cast<std::size_t>(k)] = std::log(std::max(gate(k), 1e-300)) + ls(k);
    return std::min(0.0, log_sum_exp(terms));
}

double MixtureModel::predict_log_survival(const Vector& x, double t) const {
    return predict_log_survival(x, t, gate_probs(x));
}

double MixtureModel::predict_risk(const Vector& x, double t, const Vector& gate) const {
    return -std::expm1(predict_log_survival(x, t, gate));
}

double MixtureModel::predict_risk(const Vector& x, double t) const {
    return -std::expm1(predict_log_survival(x, t));
}

Matrix MixtureModel::log_time_matrix(const Vector& times_raw) const {
    Matrix lt(times_raw.size(), k_);
    for (Eigen::Index i = 0; i < times_raw.size(); ++i) {
        if (!(times_raw(i) > 0.0)) throw std::invalid_argument("time must be positive");
        const double v = std::log(times_raw(i) / time_scale_);
        for (int k = 0; k < k_; ++k) lt(i, k) = v;
    }
    return lt;
}

std::pair<Var, Var> MixtureModel::raw_param_matrices(Tape& tape, Var x, Eigen::Index n) {
    Var e = tape.tile_rows(tape.param(eta_raw_), n);
    Var b = tape.tile_rows(tape.param(beta_raw_), n);
    if (shift_) {
        Var s = shift_->forward(tape, x);
        e = tape.add(e, tape.cols(s, 0, k_));
        b = tape.add(b, tape.cols(s, k_, k_));
    }
    return {e, b};
}

Var MixtureModel::gate_log_probs_graph(Tape& tape, Var x) {
    if (!gating_) throw std::invalid_argument("MixtureModel: no internal gating net");
    return tape.row_log_softmax(gating_->forward(tape, x));
}

Var MixtureModel::component_log_pdf_graph(Tape& tape, Var x, const Vector& times_raw) {
    auto [e, b] = raw_param_matrices(tape, x, times_raw.size());
    return log_pdf_graph(tape, family_, e, b, tape.constant(log_time_matrix(times_raw)));
}

Var MixtureModel::component_log_survival_graph(Tape& tape, Var x, const Vector& times_raw) {
    auto [e, b] = raw_param_matrices(tape, x, times_raw.size());
    return log_survival_graph(tape, family_, e, b, tape.constant(log_time_matrix(times_raw)));
}

Var uncensored_loss_graph(Tape& tape, Var gate_log_probs, Var comp_log_pdf, ElboMode mode) {
    if (mode == ElboMode::jensen_bound) {
        Var gates = tape.exp(gate_log_probs);
        return tape.neg(tape.sum(tape.mul(gates, comp_log_pdf)));
    }
    return tape.neg(tape.sum(tape.row_logsumexp(tape.add(gate_log_probs, comp_log_pdf))));
}

Var censored_loss_graph(Tape& tape, Var gate_log_probs, Var comp_log_survival, ElboMode mode) {
    // identical structure with ln S in place of ln f
    return uncensored_loss_graph(tape, gate_log_probs, comp_log_survival, mode);
}

Var MixtureModel::dsm_loss_graph(Tape& tape, const Batch& batch, const TrainConfig& cfg) {
    if (!(cfg.discount > 0.0 && cfg.discount <= 1.0))
        throw std::invalid_argument("TrainConfig: discount must lie in (0,1]");
    const Eigen::Index n = batch.size();
    if (n == 0) return tape.scalar(0.0);
    Batch unc = batch.subset(1);
    Batch cen = batch.subset(0);
    Var total = tape.scalar(0.0);
    if (unc.size() > 0) {
        Var x = tape.constant(unc.x);
        Var lg = gate_log_probs_graph(tape, x);
        Var lp = component_log_pdf_graph(tape, x, unc.u);
        total = tape.add(total, uncensored_loss_graph(tape, lg, lp, cfg.elbo_mode));
    }
    if (cen.size() > 0) {
        Var x = tape.constant(cen.x);
        Var lg = gate_log_probs_graph(tape, x);
        Var ls = component_log_survival_graph(tape, x, cen.u);
        total = tape.add(total, tape.scale(censored_loss_graph(tape, lg, ls, cfg.elbo_mode),
                                           cfg.discount));
    }
    return tape.scale(total, 1.0 / static_cast<double>(n));
}

namespace {
void require_homogeneous(const std::vector<SurvivalRecord>& batch, int delta) {
    for (const SurvivalRecord& r : batch) {
        validate_record(r);
        if (r.delta != delta)
            throw std::invalid_argument("loss batch: expected all records with delta=" +
                                        std::to_string(delta));
    }
}
}  // namespace

double MixtureModel::uncensored_loss(const std::vector<SurvivalRecord>& batch,
                                     ElboMode mode) const {
    if (batch.empty()) return 0.0;
    require_homogeneous(batch, 1);
    Batch b = Batch::from_records(batch);
    Tape tape;
    auto* self = const_cast<MixtureModel*>(this);
    Var x = tape.constant(b.x);
    Var lg = self->gate_log_probs_graph(tape, x);
    Var lp = self->component_log_pdf_graph(tape, x, b.u);
    return tape.scalar_value(uncensored_loss_graph(tape, lg, lp, mode));
}

double MixtureModel::censored_loss(const std::vector<SurvivalRecord>& batch, ElboMode mode) const {
    if (batch.empty()) return 0.0;
    require_homogeneous(batch, 0);
    Batch b = Batch::from_records(batch);
    Tape tape;
    auto* self = const_cast<MixtureModel*>(this);
    Var x = tape.constant(b.x);
    Var lg = self->gate_log_probs_graph(tape, x);
    Var ls = self->component_log_survival_graph(tape, x, b.u);
    return tape.scalar_value(censored_loss_graph(tape, lg, ls, mode));
}

double MixtureModel::dsm_loss(const std::vector<SurvivalRecord>& batch,
                              const TrainConfig& cfg) const {
    Batch b = Batch::from_records(batch);
    Tape tape;
    return tape.scalar_value(const_cast<MixtureModel*>(this)->dsm_loss_graph(tape, b, cfg));
}

std::vector<ParamTensor*> MixtureModel::parameters() {
    std::vector<ParamTensor*> out{&eta_raw_, &beta_raw_};
    if (gating_)
        for (ParamTensor* p : gating_->parameters()) out.push_back(p);
    if (shift_)
        for (ParamTensor* p : shift_->parameters()) out.push_back(p);
    return out;
}

std::vector<std::pair<double, double>> MixtureModel::natural_params() const {
    std::vector<std::pair<double, double>> out;
    for (int k = 0; k < k_; ++k) {
        PrimitiveParams p{eta_raw_.value(0, k), beta_raw_.value(0, k)};
        double eta = primitive_eta(family_, p);
        double beta = primitive_beta(family_, p);
        if (family_ == PrimitiveFamily::weibull) {
            beta *= time_scale_;  // undo the time rescaling
        } else {
            eta += std::log(time_scale_);
        }
        out.emplace_back(eta, beta);
    }
    return out;
}

void MixtureModel::add_to_checkpoint(Checkpoint& ck) const {
    ck.metadata["family"] = family_name(family_);
    ck.metadata["k"] = k_;
    ck.metadata["time_scale"] = time_scale_;
    ck.metadata["has_gating"] = gating_.has_value();
    ck.metadata["has_shift_head"] = shift_.has_value();
    ck.put_array(eta_raw_.name, eta_raw_.value);
    ck.put_array(beta_raw_.name, beta_raw_.value);
    if (gating_) {
        ck.specs["gating"] = gating_->spec();
        for (const ParamTensor* p : gating_->parameters()) ck.put_array(p->name, p->value);
    }
    if (shift_) {
        ck.specs["shift"] = shift_->spec();
        for (const ParamTensor* p : shift_->parameters()) ck.put_array(p->name, p->value);
    }
}

MixtureModel MixtureModel::from_checkpoint(const Checkpoint& ck) {
    const int k = ck.metadata.at("k").get<int>();
    const PrimitiveFamily family = family_from_name(ck.metadata.at("family").get<std::string>());
    std::optional<MlpSpec> gating_spec, shift_spec;
    if (ck.metadata.value("has_gating", false)) gating_spec = ck.specs.at("gating");
    if (ck.metadata.value("has_shift_head", false)) shift_spec = ck.specs.at("shift");
    RngStream rng(0);  // placeholder init, overwritten below
    MixtureModel model(k, family, gating_spec, rng, shift_spec);
    model.set_time_scale(ck.metadata.at("time_scale").get<double>());
    for (ParamTensor* p : model.parameters()) p->value = ck.get_array(p->name);
    return model;
}

}  // namespace vdsm
