#pragma once

#include <vector>

#include "vdsm/rng.hpp"
#include "vdsm/tape.hpp"

namespace vdsm {

struct GmmFit {
    Vector pi;                     // k mixing weights
    Matrix mu;                     // k x d means
    Matrix sigma;                  // k x d standard deviations
    std::vector<double> ll_trace;  // total log-likelihood per EM iteration
    std::vector<int> labels;       // argmax responsibility per row of x
};

// Diagonal-covariance EM with k-means++ seeding. A cluster that collects
// (numerically) no responsibility triggers a re-seed, up to max_reseed
// attempts, after which a std::runtime_error is thrown.
GmmFit fit_diagonal_gmm(const Matrix& x, int k, int iters, RngStream& rng, int max_reseed = 5);

}  // namespace vdsm
