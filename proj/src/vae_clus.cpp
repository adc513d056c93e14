#include "vdsm/vae_clus.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

GmmPrior::GmmPrior(int k, int d_z) {
    if (k < 1 || d_z < 1) throw std::invalid_argument("GmmPrior: k and d_z must be >= 1");
    pi_logits = ParamTensor("prior.pi_logits", Matrix::Zero(1, k));
    mu = ParamTensor("prior.mu", Matrix::Zero(k, d_z));
    sigma_raw = ParamTensor("prior.sigma_raw", Matrix::Constant(k, d_z, inv_softplus(1.0)));
}

Vector GmmPrior::pi() const {
    Eigen::ArrayXd e = (pi_logits.value.row(0).array() - pi_logits.value.row(0).maxCoeff()).exp();
    return (e / e.sum()).matrix();
}

Matrix GmmPrior::sigma() const {
    return sigma_raw.value.unaryExpr([](double v) { return softplus(v); });
}

void GmmPrior::set_from_fit(const GmmFit& fit) {
    if (fit.mu.rows() != mu.value.rows() || fit.mu.cols() != mu.value.cols())
        throw std::invalid_argument("GmmPrior::set_from_fit: shape mismatch");
    for (int c = 0; c < k(); ++c)
        pi_logits.value(0, c) = std::log(std::max(fit.pi(c), 1e-12));
    mu.value = fit.mu;
    sigma_raw.value = fit.sigma.unaryExpr([](double s) { return inv_softplus(std::max(s, 1e-4)); });
}

Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& eps) {
    if (mu.size() != sigma.size() || mu.size() != eps.size())
        throw std::invalid_argument("reparameterize: size mismatch");
    if (!(sigma.minCoeff() > 0.0))
        throw std::invalid_argument("reparameterize: sigma must be positive");
    return mu + sigma.cwiseProduct(eps);
}

Vector gmm_cluster_posterior(const Vector& pi, const Matrix& mu, const Matrix& sigma,
                             const Vector& z) {
    const int k = static_cast<int>(pi.size());
    if (mu.rows() != k || sigma.rows() != k || mu.cols() != z.size() || sigma.cols() != z.size())
        throw std::invalid_argument("gmm_cluster_posterior: shape mismatch");
    std::vector<double> logits(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        double lp = std::log(std::max(pi(c), 1e-300));
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            const double s2 = sigma(c, j) * sigma(c, j);
            const double diff = z(j) - mu(c, j);
            lp += -0.5 * (kLnTwoPi + std::log(s2) + diff * diff / s2);
        }
        logits[static_cast<std::size_t>(c)] = lp;
    }
    const double lse = log_sum_exp(logits);
    Vector out(k);
    for (int c = 0; c < k; ++c) out(c) = std::exp(logits[static_cast<std::size_t>(c)] - lse);
    return out;
}

Vector gmm_cluster_posterior(const GmmPrior& prior, const Vector& z) {
    return gmm_cluster_posterior(prior.pi(), prior.mu.value, prior.sigma(), z);
}

double gaussian_kl_diag(const Vector& mu_q, const Vector& var_q, const Vector& mu_p,
                        const Vector& var_p) {
    if (mu_q.size() != var_q.size() || mu_q.size() != mu_p.size() || mu_q.size() != var_p.size())
        throw std::invalid_argument("gaussian_kl_diag: size mismatch");
    double kl = 0.0;
    for (Eigen::Index j = 0; j < mu_q.size(); ++j) {
        const double diff = mu_q(j) - mu_p(j);
        kl += 0.5 * (std::log(var_p(j) / var_q(j)) + (var_q(j) + diff * diff) / var_p(j) - 1.0);
    }
    return kl;
}

ClusVae::ClusVae(int k, int d_z, MlpSpec encoder_spec, MlpSpec decoder_spec, RngStream& rng,
                 double sigma_x)
    : d_z_(d_z),
      sigma_x_(sigma_x),
      encoder_(encoder_spec, rng, "clus_encoder"),
      decoder_(decoder_spec, rng, "clus_decoder"),
      prior_(k, d_z) {
    if (encoder_spec.output_dim != 2 * d_z_)
        throw std::invalid_argument("ClusVae: encoder must output mu and ln var (2*d_z)");
    if (decoder_spec.input_dim != d_z_)
        throw std::invalid_argument("ClusVae: decoder input must be d_z");
    if (decoder_spec.output_dim != encoder_spec.input_dim)
        throw std::invalid_argument("ClusVae: decoder output must match the covariate dim");
    if (!(sigma_x_ > 0.0)) throw std::invalid_argument("ClusVae: sigma_x must be positive");
}

Matrix ClusVae::encode_mean(const Matrix& x) const {
    return encoder_.forward(x).leftCols(d_z_);
}

Matrix ClusVae::encode_logvar(const Matrix& x) const {
    return encoder_.forward(x).rightCols(d_z_);
}

Matrix ClusVae::decode(const Matrix& z) const { return decoder_.forward(z); }

Matrix ClusVae::cluster_posterior(const Matrix& x) const {
    const Matrix means = encode_mean(x);
    Matrix out(x.rows(), k());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        out.row(i) = gmm_cluster_posterior(prior_, means.row(i).transpose()).transpose();
    return out;
}

Vector ClusVae::cluster_posterior(const Vector& x) const {
    Matrix out = cluster_posterior(Matrix(x.transpose()));
    return out.row(0).transpose();
}

Var ClusVae::responsibility_logits_graph(Tape& tape, Var z) {
    const Eigen::Index n = tape.rows(z);
    const int K = k();
    Var log_pi = tape.row_log_softmax(tape.param(prior_.pi_logits));
    Var mu_all = tape.param(prior_.mu);
    Var sigma_all = tape.softplus(tape.param(prior_.sigma_raw));

    std::vector<Var> cols;
    cols.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) {
        Var mu_c = tape.tile_rows(tape.rows_slice(mu_all, c, 1), n);
        Var sigma_c = tape.rows_slice(sigma_all, c, 1);
        Var var_c = tape.tile_rows(tape.square(sigma_c), n);
        Var diff = tape.sub(z, mu_c);
        Var quad = tape.div(tape.square(diff), var_c);
        Var logvar_c = tape.log(var_c);
        Var per_dim = tape.add_scalar(tape.add(quad, logvar_c), kLnTwoPi);
        cols.push_back(tape.scale(tape.row_sum(per_dim), -0.5));
    }
    Var lognorm = tape.hcat(cols);                        // n x K
    return tape.add(lognorm, tape.tile_rows(log_pi, n));  // + ln pi
}

Var ClusVae::cluster_log_posterior_graph(Tape& tape, Var x) {
    Var enc = encoder_.forward(tape, x);
    Var mu_z = tape.cols(enc, 0, d_z_);
    return tape.row_log_softmax(responsibility_logits_graph(tape, mu_z));
}

Var ClusVae::loss_graph(Tape& tape, Var x, const Matrix& eps) {
    const Eigen::Index n = tape.rows(x);
    const Eigen::Index d = tape.cols_of(x);
    if (eps.rows() != n || eps.cols() != d_z_)
        throw std::invalid_argument("ClusVae::loss_graph: eps shape mismatch");
    const int K = k();

    Var enc = encoder_.forward(tape, x);
    Var mu_z = tape.cols(enc, 0, d_z_);
    Var logvar_z = tape.cols(enc, d_z_, d_z_);
    Var sigma_z = tape.exp(tape.scale(logvar_z, 0.5));
    Var var_z = tape.exp(logvar_z);
    Var z = tape.add(mu_z, tape.mul(sigma_z, tape.constant(eps)));

    // reconstruction log-likelihood ln N(x | decoder(z), sigma_x^2 I)
    Var x_hat = decoder_.forward(tape, z);
    const double recon_const =
        -0.5 * static_cast<double>(d) * (kLnTwoPi + 2.0 * std::log(sigma_x_));
    Var recon_ll = tape.add_scalar(
        tape.scale(tape.row_sum(tape.square(tape.sub(x, x_hat))), -0.5 / (sigma_x_ * sigma_x_)),
        recon_const);

    // responsibilities at the sampled z, gradients flow through them
    Var gamma_logits = responsibility_logits_graph(tape, z);
    Var log_gamma = tape.row_log_softmax(gamma_logits);
    Var gamma = tape.exp(log_gamma);

    // per-cluster closed-form Gaussian KL between q(z|x) and p(z|c)
    Var mu_all = tape.param(prior_.mu);
    Var sigma_all = tape.softplus(tape.param(prior_.sigma_raw));
    std::vector<Var> kl_cols;
    kl_cols.reserve(static_cast<std::size_t>(K));
    for (int c = 0; c < K; ++c) {
        Var mu_c = tape.tile_rows(tape.rows_slice(mu_all, c, 1), n);
        Var var_c = tape.tile_rows(tape.square(tape.rows_slice(sigma_all, c, 1)), n);
        Var diff2 = tape.square(tape.sub(mu_z, mu_c));
        Var ratio = tape.div(tape.add(var_z, diff2), var_c);
        Var logs = tape.sub(tape.log(var_c), logvar_z);
        Var per_dim = tape.add_scalar(tape.add(logs, ratio), -1.0);
        kl_cols.push_back(tape.scale(tape.row_sum(per_dim), 0.5));
    }
    Var kl_matrix = tape.hcat(kl_cols);  // n x K
    Var kl_gauss = tape.row_sum(tape.mul(gamma, kl_matrix));

    // KL(gamma || pi)
    Var log_pi = tape.row_log_softmax(tape.param(prior_.pi_logits));
    Var kl_cat = tape.row_sum(tape.mul(gamma, tape.sub(log_gamma, tape.tile_rows(log_pi, n))));

    Var per_sample = tape.add(tape.neg(recon_ll), tape.add(kl_gauss, kl_cat));
    return tape.scale(tape.sum(per_sample), 1.0 / static_cast<double>(n));
}

std::vector<ParamTensor*> ClusVae::parameters() {
    std::vector<ParamTensor*> out = autoencoder_parameters();
    out.push_back(&prior_.pi_logits);
    out.push_back(&prior_.mu);
    out.push_back(&prior_.sigma_raw);
    return out;
}

std::vector<ParamTensor*> ClusVae::autoencoder_parameters() {
    std::vector<ParamTensor*> out = encoder_.parameters();
    for (ParamTensor* p : decoder_.parameters()) out.push_back(p);
    return out;
}

void ClusVae::pretrain_and_init(const Matrix& x, int warmup_epochs, const AdamConfig& opt_cfg,
                                RngStream& rng, int em_iters, int batch_size) {
    if (warmup_epochs < 0) throw std::invalid_argument("pretrain_and_init: warmup_epochs >= 0");
    const Eigen::Index n = x.rows();
    if (n == 0) throw std::invalid_argument("pretrain_and_init: empty dataset");

    if (warmup_epochs > 0) {
        Adam opt(autoencoder_parameters(), opt_cfg);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < warmup_epochs; ++epoch) {
            rng.shuffle(order);
            for (Eigen::Index start = 0; start < n; start += batch_size) {
                const Eigen::Index m = std::min<Eigen::Index>(batch_size, n - start);
                Matrix xb(m, x.cols());
                for (Eigen::Index i = 0; i < m; ++i)
                    xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
                Tape tape;
                Var xv = tape.constant(xb);
                Var enc = encoder_.forward(tape, xv);
                Var x_hat = decoder_.forward(tape, tape.cols(enc, 0, d_z_));
                Var loss = tape.scale(tape.sum(tape.square(tape.sub(xv, x_hat))),
                                      1.0 / static_cast<double>(m));
                tape.backward(loss);
                opt.step();
            }
        }
    }

    GmmFit fit = fit_diagonal_gmm(encode_mean(x), k(), em_iters, rng);
    prior_.set_from_fit(fit);
}

void ClusVae::add_to_checkpoint(Checkpoint& ck) const {
    ck.metadata["clus_k"] = k();
    ck.metadata["clus_d_z"] = d_z_;
    ck.metadata["clus_sigma_x"] = sigma_x_;
    ck.specs["clus_encoder"] = encoder_.spec();
    ck.specs["clus_decoder"] = decoder_.spec();
    for (const ParamTensor* p : encoder_.parameters()) ck.put_array(p->name, p->value);
    for (const ParamTensor* p : decoder_.parameters()) ck.put_array(p->name, p->value);
    ck.put_array(prior_.pi_logits.name, prior_.pi_logits.value);
    ck.put_array(prior_.mu.name, prior_.mu.value);
    ck.put_array(prior_.sigma_raw.name, prior_.sigma_raw.value);
}

ClusVae ClusVae::from_checkpoint(const Checkpoint& ck) {
    RngStream rng(0);
    ClusVae vae(ck.metadata.at("clus_k").get<int>(), ck.metadata.at("clus_d_z").get<int>(),
                ck.specs.at("clus_encoder"), ck.specs.at("clus_decoder"), rng,
                ck.metadata.at("clus_sigma_x").get<double>());
    for (ParamTensor* p : vae.parameters()) p->value = ck.get_array(p->name);
    return vae;
}

}  // namespace vdsm
