#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/test_util.hpp"
#include "vdsm/common.hpp"
#include "vdsm/vae_clus.hpp"

using namespace vdsm;

namespace {

ClusVae make_vae(int k, int d_z, int x_dim, std::uint64_t seed, double sigma_x = 1.0) {
    RngStream rng(seed);
    MlpSpec enc{x_dim, {8}, 2 * d_z, Activation::tanh};
    MlpSpec dec{d_z, {8}, x_dim, Activation::tanh};
    return ClusVae(k, d_z, enc, dec, rng, sigma_x);
}

Matrix normal_noise(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
    return out;
}

double scalar_log_normal(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLnTwoPi + std::log(var) + d * d / var);
}

}  // namespace

TEST_CASE("reparameterize basics and moments") {
    Vector mu(2), sigma(2), eps(2);
    mu << 0.5, -1.0;
    sigma << 1.0, 2.0;
    eps.setZero();
    Vector z = reparameterize(mu, sigma, eps);
    CHECK(z(0) == doctest::Approx(0.5));
    CHECK(z(1) == doctest::Approx(-1.0));

    mu.setZero();
    sigma.setOnes();
    eps << 0.3, -0.8;
    z = reparameterize(mu, sigma, eps);
    CHECK(z(0) == doctest::Approx(0.3));
    CHECK(z(1) == doctest::Approx(-0.8));

    RngStream rng(5);
    mu << 1.5, -0.5;
    sigma << 0.7, 1.3;
    const int n = 100000;
    Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
    for (int i = 0; i < n; ++i) {
        Vector e(2);
        e << rng.normal(), rng.normal();
        Vector s = reparameterize(mu, sigma, e);
        sum += s;
        sq += s.cwiseProduct(s);
    }
    for (int j = 0; j < 2; ++j) {
        const double mean = sum(j) / n;
        const double var = sq(j) / n - mean * mean;
        CHECK(std::abs(mean - mu(j)) < 0.01 * std::max(1.0, std::abs(mu(j))) + 0.01);
        CHECK(std::abs(var - sigma(j) * sigma(j)) / (sigma(j) * sigma(j)) < 0.01);
    }
}

TEST_CASE("gmm_cluster_posterior simple cases") {
    // K=1
    Vector pi1 = Vector::Ones(1);
    Matrix mu1 = Matrix::Zero(1, 2), sg1 = Matrix::Ones(1, 2);
    Vector z(2);
    z << 0.3, -0.4;
    Vector r1 = gmm_cluster_posterior(pi1, mu1, sg1, z);
    CHECK(r1(0) == doctest::Approx(1.0).epsilon(1e-15));

    // identical clusters -> uniform
    Vector pi3 = Vector::Constant(3, 1.0 / 3.0);
    Matrix mu3 = Matrix::Constant(3, 2, 0.7);
    Matrix sg3 = Matrix::Constant(3, 2, 1.3);
    Vector r3 = gmm_cluster_posterior(pi3, mu3, sg3, z);
    for (int c = 0; c < 3; ++c) CHECK(r3(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("gmm_cluster_posterior matches a density-ratio oracle and permutes") {
    RngStream rng(8);
    for (int trial = 0; trial < 25; ++trial) {
        Vector pi(3);
        for (int c = 0; c < 3; ++c) pi(c) = rng.uniform(0.05, 1.0);
        pi /= pi.sum();
        Matrix mu(3, 2), sigma(3, 2);
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 2; ++j) {
                mu(c, j) = rng.uniform(-3, 3);
                sigma(c, j) = rng.uniform(0.3, 2.0);
            }
        Vector z(2);
        z << rng.uniform(-3, 3), rng.uniform(-3, 3);

        Vector got = gmm_cluster_posterior(pi, mu, sigma, z);
        CHECK(std::abs(got.sum() - 1.0) < 1e-12);

        // independent oracle: unnormalized densities in linear space
        Vector dens(3);
        for (int c = 0; c < 3; ++c) {
            double lp = std::log(pi(c));
            for (int j = 0; j < 2; ++j)
                lp += scalar_log_normal(z(j), mu(c, j), sigma(c, j) * sigma(c, j));
            dens(c) = std::exp(lp);
        }
        for (int c = 0; c < 3; ++c)
            CHECK(got(c) == doctest::Approx(dens(c) / dens.sum()).epsilon(1e-10));

        // permutation equivariance: swap clusters 0 and 2
        Vector pi_p = pi;
        std::swap(pi_p(0), pi_p(2));
        Matrix mu_p = mu, sg_p = sigma;
        mu_p.row(0).swap(mu_p.row(2));
        sg_p.row(0).swap(sg_p.row(2));
        Vector got_p = gmm_cluster_posterior(pi_p, mu_p, sg_p, z);
        CHECK(got_p(0) == doctest::Approx(got(2)).epsilon(1e-12));
        CHECK(got_p(2) == doctest::Approx(got(0)).epsilon(1e-12));
    }
}

TEST_CASE("gaussian_kl_diag is nonnegative and zero only at equality") {
    Vector mu_q(2), var_q(2), mu_p(2), var_p(2);
    mu_q << 0.4, -0.2;
    var_q << 0.8, 1.5;
    CHECK(gaussian_kl_diag(mu_q, var_q, mu_q, var_q) == doctest::Approx(0.0).epsilon(1e-14));

    RngStream rng(12);
    for (int t = 0; t < 200; ++t) {
        for (int j = 0; j < 2; ++j) {
            mu_q(j) = rng.uniform(-2, 2);
            mu_p(j) = rng.uniform(-2, 2);
            var_q(j) = rng.uniform(0.2, 3.0);
            var_p(j) = rng.uniform(0.2, 3.0);
        }
        const double kl = gaussian_kl_diag(mu_q, var_q, mu_p, var_p);
        CHECK(kl >= 0.0);
        if ((mu_q - mu_p).norm() > 0.1 || (var_q - var_p).norm() > 0.1) CHECK(kl > 0.0);
    }
}

TEST_CASE("K=1 standard-normal prior reduces to the plain VAE bound") {
    auto vae = make_vae(1, 3, 2, 77, 0.9);
    // default prior is exactly N(0, I) with pi = (1)
    Matrix x(4, 2);
    RngStream rng(78);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.uniform(-1, 1);
    Matrix eps = normal_noise(rng, 4, 3);

    Tape tape;
    const double got = tape.scalar_value(vae.loss_graph(tape, tape.constant(x), eps));

    // independent plain-VAE recomputation
    Matrix mu = vae.encode_mean(x);
    Matrix lv = vae.encode_logvar(x);
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
        Vector var = lv.row(i).array().exp().matrix().transpose();
        Vector z = mu.row(i).transpose() +
                   (lv.row(i).array() * 0.5).exp().matrix().transpose().cwiseProduct(
                       eps.row(i).transpose());
        Matrix x_hat = vae.decode(Matrix(z.transpose()));
        const double sx2 = 0.9 * 0.9;
        double recon_ll = -0.5 * (x.row(i) - x_hat.row(0)).squaredNorm() / sx2 -
                          0.5 * 2.0 * (kLnTwoPi + std::log(sx2));
        const double kl = gaussian_kl_diag(mu.row(i).transpose(), var, Vector::Zero(3),
                                           Vector::Ones(3));
        total += -recon_ll + kl;
    }
    CHECK(got == doctest::Approx(total / 4.0).epsilon(1e-10));
}

TEST_CASE("matching encoder distribution zeroes the Gaussian KL term") {
    auto vae = make_vae(2, 2, 2, 80);
    // prior: two well-separated clusters with sigma = 0.5
    vae.prior().mu.value << 5.0, 5.0, -5.0, -5.0;
    vae.prior().sigma_raw.value.setConstant(inv_softplus(0.5));
    vae.prior().pi_logits.value.setZero();

    // zero encoder emitting exactly (mu_0, ln sigma_0^2)
    for (ParamTensor* p : vae.parameters())
        if (p->name.rfind("clus_encoder", 0) == 0) p->value.setZero();
    ParamTensor* enc_bias = nullptr;
    for (ParamTensor* p : vae.parameters())
        if (p->name == "clus_encoder.b1") enc_bias = p;
    REQUIRE(enc_bias != nullptr);
    enc_bias->value << 5.0, 5.0, std::log(0.25), std::log(0.25);

    Matrix x(1, 2);
    x << 0.3, -0.6;
    Matrix eps = Matrix::Zero(1, 2);  // z = mu_z = mu_0

    Tape tape;
    const double got = tape.scalar_value(vae.loss_graph(tape, tape.constant(x), eps));

    // gamma is one-hot on cluster 0, so only -recon_ll and KL(gamma||pi)=ln 2 remain
    Matrix x_hat = vae.decode(vae.encode_mean(x));
    const double recon_ll =
        -0.5 * (x.row(0) - x_hat.row(0)).squaredNorm() - 0.5 * 2.0 * kLnTwoPi;
    CHECK(got == doctest::Approx(-recon_ll + std::log(2.0)).epsilon(1e-8));
}

TEST_CASE("cluster_posterior_clus composes the encoder mean with the prior") {
    auto vae = make_vae(3, 2, 2, 90);
    RngStream rng(91);
    vae.prior().mu.value = normal_noise(rng, 3, 2);
    for (int trial = 0; trial < 10; ++trial) {
        Vector x(2);
        x << rng.uniform(-2, 2), rng.uniform(-2, 2);
        Vector mu_z = vae.encode_mean(Matrix(x.transpose())).row(0).transpose();
        Vector expect = gmm_cluster_posterior(vae.prior(), mu_z);
        Vector got = vae.cluster_posterior(x);
        CHECK(std::abs(got.sum() - 1.0) < 1e-12);
        for (int c = 0; c < 3; ++c) CHECK(got(c) == doctest::Approx(expect(c)).epsilon(1e-12));

        Tape tape;
        Var lp = vae.cluster_log_posterior_graph(tape, tape.constant(Matrix(x.transpose())));
        for (int c = 0; c < 3; ++c)
            CHECK(std::exp(tape.val(lp)(0, c)) == doctest::Approx(got(c)).epsilon(1e-12));
    }
}

TEST_CASE("well-separated prior means pin the posterior") {
    auto vae = make_vae(2, 2, 2, 95);
    vae.prior().mu.value << 5.0, 5.0, -5.0, -5.0;
    vae.prior().sigma_raw.value.setConstant(inv_softplus(1.0));
    for (ParamTensor* p : vae.parameters())
        if (p->name.rfind("clus_encoder", 0) == 0) p->value.setZero();
    ParamTensor* enc_bias = nullptr;
    for (ParamTensor* p : vae.parameters())
        if (p->name == "clus_encoder.b1") enc_bias = p;
    enc_bias->value << 5.0, 5.0, 0.0, 0.0;

    Vector x(2);
    x << 0.1, 0.2;
    Vector post = vae.cluster_posterior(x);
    CHECK(post(0) > 0.999);
}

TEST_CASE("elbo gradients pass finite differences with fixed draws") {
    auto vae = make_vae(3, 2, 3, 101);
    RngStream rng(102);
    vae.prior().mu.value = normal_noise(rng, 3, 2);
    Matrix x(6, 3);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1.5, 1.5);
    Matrix eps = normal_noise(rng, 6, 2);

    auto loss_value = [&]() {
        Tape tape;
        return tape.scalar_value(vae.loss_graph(tape, tape.constant(x), eps));
    };
    auto grad_fill = [&]() {
        Tape tape;
        tape.backward(vae.loss_graph(tape, tape.constant(x), eps));
    };
    auto res = testing::finite_difference_check(vae.parameters(), loss_value, grad_fill);
    INFO("worst: ", res.worst);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("ELBO never exceeds importance-sampled log evidence on a 2-D toy") {
    // x = z + noise with z from two separated Gaussians
    RngStream data_rng(2023);
    const int n = 400;
    Matrix x(n, 2);
    for (int i = 0; i < n; ++i) {
        const double sign = data_rng.uniform() < 0.5 ? 1.0 : -1.0;
        for (int j = 0; j < 2; ++j)
            x(i, j) = sign * 2.0 + 0.5 * data_rng.normal() + 0.3 * data_rng.normal();
    }

    RngStream rng(2024);
    MlpSpec enc{2, {16}, 4, Activation::tanh};
    MlpSpec dec{2, {16}, 2, Activation::tanh};
    ClusVae vae(2, 2, enc, dec, rng, 1.0);
    AdamConfig warm;
    warm.lr = 1e-2;
    vae.pretrain_and_init(x, 15, warm, rng);
    Adam opt(vae.parameters(), AdamConfig{1e-2});
    for (int step = 0; step < 300; ++step) {
        Tape tape;
        Var loss = vae.loss_graph(tape, tape.constant(x), normal_noise(rng, n, 2));
        tape.backward(loss);
        opt.step();
    }

    const Vector pi = vae.prior().pi();
    const Matrix pr_mu = vae.prior().mu.value;
    const Matrix pr_sigma = vae.prior().sigma();

    for (int pt = 0; pt < 5; ++pt) {
        Matrix xi = x.row(pt * 50);

        // ELBO estimate averaged over fresh single draws
        const int m = 200;
        std::vector<double> elbos;
        for (int s = 0; s < m; ++s) {
            Tape tape;
            elbos.push_back(
                -tape.scalar_value(vae.loss_graph(tape, tape.constant(xi), normal_noise(rng, 1, 2))));
        }
        const double elbo_mean = testing::mean_of(elbos);
        double se = 0.0;
        for (double e : elbos) se += (e - elbo_mean) * (e - elbo_mean);
        se = std::sqrt(se / (m - 1.0) / m);

        // importance sampling with q(z|x) as proposal
        Vector mu_z = vae.encode_mean(xi).row(0).transpose();
        Vector lv = vae.encode_logvar(xi).row(0).transpose();
        Vector sd = (lv.array() * 0.5).exp().matrix();
        const int s_count = 10000;
        std::vector<double> logw(s_count);
        for (int s = 0; s < s_count; ++s) {
            Vector z(2);
            double log_q = 0.0;
            for (int j = 0; j < 2; ++j) {
                const double e = rng.normal();
                z(j) = mu_z(j) + sd(j) * e;
                log_q += scalar_log_normal(z(j), mu_z(j), sd(j) * sd(j));
            }
            Matrix x_hat = vae.decode(Matrix(z.transpose()));
            double log_px_z = -0.5 * (xi.row(0) - x_hat.row(0)).squaredNorm() - kLnTwoPi;
            std::vector<double> comp(2);
            for (int c = 0; c < 2; ++c) {
                double lp = std::log(pi(c));
                for (int j = 0; j < 2; ++j)
                    lp += scalar_log_normal(z(j), pr_mu(c, j), pr_sigma(c, j) * pr_sigma(c, j));
                comp[static_cast<std::size_t>(c)] = lp;
            }
            logw[static_cast<std::size_t>(s)] = log_px_z + log_sum_exp(comp) - log_q;
        }
        const double lmax = *std::max_element(logw.begin(), logw.end());
        double wsum = 0.0, wsq = 0.0;
        for (double lw : logw) {
            const double w = std::exp(lw - lmax);
            wsum += w;
            wsq += w * w;
        }
        const double log_px = lmax + std::log(wsum / s_count);
        const double wmean = wsum / s_count;
        const double wsd = std::sqrt(std::max(wsq / s_count - wmean * wmean, 0.0));
        const double se_is = wsd / (wmean * std::sqrt(static_cast<double>(s_count)));

        INFO("point ", pt, ": elbo ", elbo_mean, " log_px ", log_px);
        CHECK(elbo_mean <= log_px + 3.0 * (se + se_is) + 1e-6);
    }
}

TEST_CASE("pretrain_and_init recovers separated blobs through an identity encoder") {
    RngStream data_rng(31);
    const int per = 120;
    Matrix x(3 * per, 2);
    Matrix truth(3, 2);
    truth << 0.0, 0.0, 6.0, 0.0, 0.0, 6.0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per; ++i)
            for (int j = 0; j < 2; ++j)
                x(c * per + i, j) = truth(c, j) + 0.05 * data_rng.normal();

    RngStream rng(32);
    MlpSpec enc{2, {}, 4, Activation::tanh};
    MlpSpec dec{2, {}, 2, Activation::tanh};
    ClusVae vae(3, 2, enc, dec, rng);
    // encoder = [I 0]: mean passes x through, logvar = 0
    for (ParamTensor* p : vae.parameters()) {
        if (p->name == "clus_encoder.W0") {
            p->value.setZero();
            p->value(0, 0) = 1.0;
            p->value(1, 1) = 1.0;
        } else if (p->name == "clus_encoder.b0") {
            p->value.setZero();
        }
    }
    vae.pretrain_and_init(x, 0, AdamConfig{}, rng);

    // match fitted means to truth greedily over the 6 permutations
    const Matrix& fitted = vae.prior().mu.value;
    std::vector<int> perm{0, 1, 2};
    double best = std::numeric_limits<double>::infinity();
    std::sort(perm.begin(), perm.end());
    do {
        double worst = 0.0;
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, (fitted.row(perm[static_cast<std::size_t>(c)]) -
                                     truth.row(c)).norm());
        best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(best < 0.1);
}

TEST_CASE("pretrain_and_init with K=1 sets the prior to the encoding mean") {
    auto vae = make_vae(1, 2, 3, 40);
    RngStream rng(41);
    Matrix x = normal_noise(rng, 50, 3);
    vae.pretrain_and_init(x, 0, AdamConfig{}, rng);
    Matrix means = vae.encode_mean(x);
    Vector avg = means.colwise().mean().transpose();
    CHECK((vae.prior().mu.value.row(0).transpose() - avg).norm() < 1e-9);
    CHECK(vae.prior().pi()(0) == doctest::Approx(1.0));
}

TEST_CASE("EM log-likelihood trace is non-decreasing") {
    RngStream rng(50);
    Matrix x = normal_noise(rng, 200, 2);
    x.topRows(100).array() += 3.0;
    GmmFit fit = fit_diagonal_gmm(x, 2, 30, rng);
    REQUIRE(fit.ll_trace.size() == 30);
    for (std::size_t i = 1; i < fit.ll_trace.size(); ++i)
        CHECK(fit.ll_trace[i] >= fit.ll_trace[i - 1] - 1e-8);
}

TEST_CASE("checkpoint round trip preserves the cluster posterior") {
    auto vae = make_vae(3, 2, 3, 60);
    RngStream rng(61);
    vae.prior().mu.value = normal_noise(rng, 3, 2);
    Checkpoint ck;
    vae.add_to_checkpoint(ck);
    ClusVae back = ClusVae::from_checkpoint(ck);
    Vector x(3);
    x << 0.2, -0.4, 0.9;
    CHECK((vae.cluster_posterior(x) - back.cluster_posterior(x)).cwiseAbs().maxCoeff() == 0.0);
}
