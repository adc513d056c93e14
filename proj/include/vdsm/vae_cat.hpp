#pragma once

#include "vdsm/checkpoint.hpp"
#include "vdsm/mlp.hpp"
#include "vdsm/rng.hpp"

namespace vdsm {

// Categorical latent layout: n_dims independent categorical variables with
// k categories each; k matches the mixture size.
struct CatLatentSpec {
    int n_dims = 1;
    int k = 2;
    double tau = 1.0;
};

void validate_cat_spec(const CatLatentSpec& spec);

double gumbel_from_uniform(double u);
Matrix gumbel_sample(RngStream& rng, Eigen::Index rows, Eigen::Index cols);

Vector gumbel_softmax(const Vector& logits, double tau, const Vector& g);
// logits and g are (n, k); softmax((logits + g) / tau) per row
Var gumbel_softmax_graph(Tape& tape, Var logits, double tau, Var g);

// sum q_i ln(q_i / prior_i), with 0 ln 0 = 0
double categorical_kl(const Vector& q, const Vector& prior);

// Encoder produces n_dims*k logits; the decoder reconstructs x from the
// concatenated relaxed one-hot blocks. The cluster posterior over the k
// mixture components is the renormalized product of per-dimension
// posteriors, accumulated in the log domain.
class CatVae {
public:
    CatVae(CatLatentSpec spec, MlpSpec encoder_spec, MlpSpec decoder_spec, RngStream& rng);

    const CatLatentSpec& latent_spec() const { return spec_; }
    void set_tau(double tau);
    const Mlp& encoder() const { return encoder_; }
    const Mlp& decoder() const { return decoder_; }

    Matrix encoder_logits(const Matrix& x) const;
    Matrix cluster_posterior(const Matrix& x) const;  // n x k
    Vector cluster_posterior(const Vector& x) const;

    Var cluster_log_posterior_graph(Tape& tape, Var x);
    // KL-to-uniform over every latent dimension plus squared reconstruction
    // error, mean over the batch; gumbel_noise is (n, n_dims*k).
    Var loss_graph(Tape& tape, Var x, const Matrix& gumbel_noise);

    std::vector<ParamTensor*> parameters();

    void add_to_checkpoint(Checkpoint& ck) const;
    static CatVae from_checkpoint(const Checkpoint& ck);

private:
    CatLatentSpec spec_;
    Mlp encoder_;
    Mlp decoder_;
};

}  // namespace vdsm
