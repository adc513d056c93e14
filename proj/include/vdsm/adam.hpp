#pragma once

#include <cstdint>
#include <vector>

#include "vdsm/tape.hpp"

namespace vdsm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Global-norm gradient clip; <= 0 disables.
    double clip_norm = 10.0;
};

// Bias-corrected Adam over a fixed parameter set. step() consumes and zeroes
// the accumulated gradients. Throws TrainingDivergence (with the parameter
// name) on a non-finite gradient or update.
class Adam {
public:
    Adam(std::vector<ParamTensor*> params, AdamConfig cfg);

    void step();
    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<ParamTensor*> params_;
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Matrix> m_;  // first moments, aligned with params_
    std::vector<Matrix> v_;  // second moments
};

}  // namespace vdsm
