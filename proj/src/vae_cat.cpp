#include "vdsm/vae_cat.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

void validate_cat_spec(const CatLatentSpec& spec) {
    if (spec.n_dims < 1) throw std::invalid_argument("CatLatentSpec: n_dims must be >= 1");
    if (spec.k < 2) throw std::invalid_argument("CatLatentSpec: k must be >= 2");
    if (!(spec.tau > 0.0)) throw std::invalid_argument("CatLatentSpec: tau must be positive");
}

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

Matrix gumbel_sample(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) g(i, j) = gumbel_from_uniform(rng.uniform());
    return g;
}

Vector gumbel_softmax(const Vector& logits, double tau, const Vector& g) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
    if (logits.size() != g.size())
        throw std::invalid_argument("gumbel_softmax: logits/noise size mismatch");
    Eigen::ArrayXd z = (logits + g).array() / tau;
    z -= z.maxCoeff();
    Eigen::ArrayXd e = z.exp();
    return (e / e.sum()).matrix();
}

Var gumbel_softmax_graph(Tape& tape, Var logits, double tau, Var g) {
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
    return tape.row_softmax(tape.scale(tape.add(logits, g), 1.0 / tau));
}

double categorical_kl(const Vector& q, const Vector& prior) {
    if (q.size() != prior.size()) throw std::invalid_argument("categorical_kl: size mismatch");
    const double tol = 1e-9;
    if (std::abs(q.sum() - 1.0) > tol || std::abs(prior.sum() - 1.0) > tol ||
        q.minCoeff() < -tol || prior.minCoeff() < -tol)
        throw std::invalid_argument("categorical_kl: inputs must be probability vectors");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q(i) <= 0.0) continue;
        if (prior(i) <= 0.0)
            throw std::invalid_argument("categorical_kl: prior has a zero where q is positive");
        kl += q(i) * std::log(q(i) / prior(i));
    }
    return std::max(kl, 0.0);
}

CatVae::CatVae(CatLatentSpec spec, MlpSpec encoder_spec, MlpSpec decoder_spec, RngStream& rng)
    : spec_(spec),
      encoder_(encoder_spec, rng, "cat_encoder"),
      decoder_(decoder_spec, rng, "cat_decoder") {
    validate_cat_spec(spec_);
    const Eigen::Index latent = static_cast<Eigen::Index>(spec_.n_dims) * spec_.k;
    if (encoder_spec.output_dim != latent)
        throw std::invalid_argument("CatVae: encoder output must be n_dims*k logits");
    if (decoder_spec.input_dim != latent)
        throw std::invalid_argument("CatVae: decoder input must be n_dims*k");
    if (decoder_spec.output_dim != encoder_spec.input_dim)
        throw std::invalid_argument("CatVae: decoder output must match the covariate dim");
}

void CatVae::set_tau(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("CatVae: tau must be positive");
    spec_.tau = tau;
}

Matrix CatVae::encoder_logits(const Matrix& x) const { return encoder_.forward(x); }

Matrix CatVae::cluster_posterior(const Matrix& x) const {
    const Matrix logits = encoder_.forward(x);
    const int k = spec_.k;
    Matrix acc = Matrix::Zero(x.rows(), k);
    for (int d = 0; d < spec_.n_dims; ++d) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto block = logits.row(i).segment(static_cast<Eigen::Index>(d) * k, k);
            const double m = block.maxCoeff();
            const double lse = m + std::log((block.array() - m).exp().sum());
            acc.row(i) += (block.array() - lse).matrix();
        }
    }
    Matrix out(x.rows(), k);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = acc.row(i).maxCoeff();
        Eigen::ArrayXd e = (acc.row(i).array() - m).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

Vector CatVae::cluster_posterior(const Vector& x) const {
    Matrix out = cluster_posterior(Matrix(x.transpose()));
    return out.row(0).transpose();
}

Var CatVae::cluster_log_posterior_graph(Tape& tape, Var x) {
    Var logits = encoder_.forward(tape, x);
    const int k = spec_.k;
    Var acc = tape.row_log_softmax(tape.cols(logits, 0, k));
    for (int d = 1; d < spec_.n_dims; ++d) {
        Var block = tape.row_log_softmax(tape.cols(logits, static_cast<Eigen::Index>(d) * k, k));
        acc = tape.add(acc, block);
    }
    return tape.row_log_softmax(acc);
}

Var CatVae::loss_graph(Tape& tape, Var x, const Matrix& gumbel_noise) {
    const Eigen::Index n = tape.rows(x);
    const int k = spec_.k;
    const Eigen::Index latent = static_cast<Eigen::Index>(spec_.n_dims) * k;
    if (gumbel_noise.rows() != n || gumbel_noise.cols() != latent)
        throw std::invalid_argument("CatVae::loss_graph: noise shape mismatch");

    Var logits = encoder_.forward(tape, x);
    Var noise = tape.constant(gumbel_noise);

    Var kl_total = tape.constant(Matrix::Zero(n, 1));
    std::vector<Var> samples;
    const double log_k = std::log(static_cast<double>(k));
    for (int d = 0; d < spec_.n_dims; ++d) {
        const Eigen::Index off = static_cast<Eigen::Index>(d) * k;
        Var block = tape.cols(logits, off, k);
        Var q = tape.row_softmax(block);
        Var lq = tape.row_log_softmax(block);
        // KL against the uniform prior: sum q ln q + ln k
        Var kl = tape.add_scalar(tape.row_sum(tape.mul(q, lq)), log_k);
        kl_total = tape.add(kl_total, kl);
        samples.push_back(gumbel_softmax_graph(tape, block, spec_.tau, tape.cols(noise, off, k)));
    }
    Var recon_in = spec_.n_dims == 1 ? samples[0] : tape.hcat(samples);
    Var x_hat = decoder_.forward(tape, recon_in);
    Var recon = tape.row_sum(tape.square(tape.sub(x, x_hat)));
    return tape.scale(tape.sum(tape.add(kl_total, recon)), 1.0 / static_cast<double>(n));
}

std::vector<ParamTensor*> CatVae::parameters() {
    std::vector<ParamTensor*> out = encoder_.parameters();
    for (ParamTensor* p : decoder_.parameters()) out.push_back(p);
    return out;
}

void CatVae::add_to_checkpoint(Checkpoint& ck) const {
    ck.metadata["cat_n_dims"] = spec_.n_dims;
    ck.metadata["cat_k"] = spec_.k;
    ck.metadata["cat_tau"] = spec_.tau;
    ck.specs["cat_encoder"] = encoder_.spec();
    ck.specs["cat_decoder"] = decoder_.spec();
    for (const ParamTensor* p : encoder_.parameters()) ck.put_array(p->name, p->value);
    for (const ParamTensor* p : decoder_.parameters()) ck.put_array(p->name, p->value);
}

CatVae CatVae::from_checkpoint(const Checkpoint& ck) {
    CatLatentSpec spec;
    spec.n_dims = ck.metadata.at("cat_n_dims").get<int>();
    spec.k = ck.metadata.at("cat_k").get<int>();
    spec.tau = ck.metadata.at("cat_tau").get<double>();
    RngStream rng(0);
    CatVae vae(spec, ck.specs.at("cat_encoder"), ck.specs.at("cat_decoder"), rng);
    for (ParamTensor* p : vae.parameters()) p->value = ck.get_array(p->name);
    return vae;
}

}  // namespace vdsm
