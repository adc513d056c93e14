#include "vdsm/gmm_em.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

namespace {

constexpr double kVarFloor = 1e-8;
constexpr double kMinClusterWeight = 1e-9;

Matrix kmeanspp_centers(const Matrix& x, int k, RngStream& rng) {
    const Eigen::Index n = x.rows();
    Matrix centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));
    Vector best_d2 = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i)
            best_d2(i) = std::min(best_d2(i), (x.row(i) - centers.row(c - 1)).squaredNorm());
        const double total = best_d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        } else {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += best_d2(i);
                if (u <= acc) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(c) = x.row(pick);
    }
    return centers;
}

}  // namespace

GmmFit fit_diagonal_gmm(const Matrix& x, int k, int iters, RngStream& rng, int max_reseed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (n == 0) throw std::invalid_argument("fit_diagonal_gmm: empty input");
    if (k < 1) throw std::invalid_argument("fit_diagonal_gmm: k must be >= 1");
    if (iters < 1) throw std::invalid_argument("fit_diagonal_gmm: iters must be >= 1");

    Vector global_var(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double mean = x.col(j).mean();
        global_var(j) = std::max((x.col(j).array() - mean).square().mean(), kVarFloor);
    }

    for (int attempt = 0; attempt <= max_reseed; ++attempt) {
        GmmFit fit;
        fit.pi = Vector::Constant(k, 1.0 / k);
        fit.mu = kmeanspp_centers(x, k, rng);
        fit.sigma = global_var.array().sqrt().matrix().transpose().replicate(k, 1);

        Matrix resp(n, k);
        bool degenerate = false;
        for (int it = 0; it < iters && !degenerate; ++it) {
            // E-step in the log domain
            double ll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                std::vector<double> logits(static_cast<std::size_t>(k));
                for (int c = 0; c < k; ++c) {
                    double lp = std::log(std::max(fit.pi(c), 1e-300));
                    for (Eigen::Index j = 0; j < d; ++j) {
                        const double s2 = fit.sigma(c, j) * fit.sigma(c, j);
                        const double diff = x(i, j) - fit.mu(c, j);
                        lp += -0.5 * (kLnTwoPi + std::log(s2) + diff * diff / s2);
                    }
                    logits[static_cast<std::size_t>(c)] = lp;
                }
                const double lse = log_sum_exp(logits);
                ll += lse;
                for (int c = 0; c < k; ++c)
                    resp(i, c) = std::exp(logits[static_cast<std::size_t>(c)] - lse);
            }
            fit.ll_trace.push_back(ll);

            // M-step
            for (int c = 0; c < k; ++c) {
                const double nc = resp.col(c).sum();
                if (nc < kMinClusterWeight * n) {
                    degenerate = true;
                    break;
                }
                fit.pi(c) = nc / static_cast<double>(n);
                for (Eigen::Index j = 0; j < d; ++j) {
                    const double m = resp.col(c).dot(x.col(j)) / nc;
                    fit.mu(c, j) = m;
                    const double v =
                        (resp.col(c).array() * (x.col(j).array() - m).square()).sum() / nc;
                    fit.sigma(c, j) = std::sqrt(std::max(v, kVarFloor));
                }
            }
        }
        if (degenerate) continue;

        fit.labels.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg;
            resp.row(i).maxCoeff(&arg);
            fit.labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        return fit;
    }
    throw std::runtime_error("fit_diagonal_gmm: degenerate cluster after " +
                             std::to_string(max_reseed + 1) + " seeding attempts");
}

}  // namespace vdsm
