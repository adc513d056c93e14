#pragma once

#include "vdsm/adam.hpp"
#include "vdsm/checkpoint.hpp"
#include "vdsm/gmm_em.hpp"
#include "vdsm/mlp.hpp"
#include "vdsm/rng.hpp"

namespace vdsm {

// Learnable Gaussian-mixture prior over the latent space: mixing weights via
// softmax of logits, per-cluster diagonal scales via softplus.
struct GmmPrior {
    ParamTensor pi_logits;  // 1 x k
    ParamTensor mu;         // k x d_z
    ParamTensor sigma_raw;  // k x d_z

    GmmPrior() = default;
    GmmPrior(int k, int d_z);

    int k() const { return static_cast<int>(pi_logits.value.cols()); }
    int latent_dim() const { return static_cast<int>(mu.value.cols()); }
    Vector pi() const;
    Matrix sigma() const;  // softplus(sigma_raw)
    void set_from_fit(const GmmFit& fit);
};

Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& eps);

// Responsibilities p(c)p(z|c) / sum_c' p(c')p(z|c'), log-domain.
Vector gmm_cluster_posterior(const Vector& pi, const Matrix& mu, const Matrix& sigma,
                             const Vector& z);
Vector gmm_cluster_posterior(const GmmPrior& prior, const Vector& z);

// KL(N(mu_q, var_q) || N(mu_p, var_p)) for diagonal Gaussians.
double gaussian_kl_diag(const Vector& mu_q, const Vector& var_q, const Vector& mu_p,
                        const Vector& var_p);

// Gaussian-mixture VAE. The encoder emits (mu_z, ln var_z); reconstruction is
// Gaussian with fixed scalar sigma_x. The loss is the negative evidence lower
// bound with responsibilities evaluated at the sampled z and treated as a
// differentiable function of it.
class ClusVae {
public:
    ClusVae(int k, int d_z, MlpSpec encoder_spec, MlpSpec decoder_spec, RngStream& rng,
            double sigma_x = 1.0);

    int k() const { return prior_.k(); }
    int latent_dim() const { return d_z_; }
    double sigma_x() const { return sigma_x_; }
    GmmPrior& prior() { return prior_; }
    const GmmPrior& prior() const { return prior_; }
    const Mlp& encoder() const { return encoder_; }
    const Mlp& decoder() const { return decoder_; }

    Matrix encode_mean(const Matrix& x) const;    // n x d_z
    Matrix encode_logvar(const Matrix& x) const;  // n x d_z
    Matrix decode(const Matrix& z) const;

    // q(c|x) = p(c|z) at z = mu_z(x)
    Matrix cluster_posterior(const Matrix& x) const;
    Vector cluster_posterior(const Vector& x) const;

    Var cluster_log_posterior_graph(Tape& tape, Var x);
    // negative ELBO, mean over the batch; eps is (n, d_z) standard normal.
    Var loss_graph(Tape& tape, Var x, const Matrix& eps);

    std::vector<ParamTensor*> parameters();
    std::vector<ParamTensor*> autoencoder_parameters();

    // Reconstruction-only warmup for the encoder/decoder followed by an EM
    // fit of the prior on the encoded means.
    void pretrain_and_init(const Matrix& x, int warmup_epochs, const AdamConfig& opt_cfg,
                           RngStream& rng, int em_iters = 50, int batch_size = 256);

    void add_to_checkpoint(Checkpoint& ck) const;
    static ClusVae from_checkpoint(const Checkpoint& ck);

private:
    int d_z_;
    double sigma_x_;
    Mlp encoder_;
    Mlp decoder_;
    GmmPrior prior_;

    // cluster log-posterior logits for a latent batch (n x k)
    Var responsibility_logits_graph(Tape& tape, Var z);
};

}  // namespace vdsm
