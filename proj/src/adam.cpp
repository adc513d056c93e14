#include "vdsm/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

Adam::Adam(std::vector<ParamTensor*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("Adam: lr must be positive");
    if (!(cfg_.beta1 > 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 > 0.0 && cfg_.beta2 < 1.0))
        throw std::invalid_argument("Adam: betas must lie in (0,1)");
    if (!(cfg_.eps > 0.0)) throw std::invalid_argument("Adam: eps must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ParamTensor* p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step() {
    for (const ParamTensor* p : params_)
        if (!p->grad.allFinite())
            throw TrainingDivergence("non-finite gradient in parameter '" + p->name + "'");

    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const ParamTensor* p : params_) sq += p->grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) {
            const double s = cfg_.clip_norm / norm;
            for (ParamTensor* p : params_) p->grad *= s;
        }
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ParamTensor& p = *params_[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
        v_[i] = cfg_.beta2 * v_[i].array().matrix() +
                (1.0 - cfg_.beta2) * p.grad.array().square().matrix();
        const Matrix m_hat = m_[i] / bc1;
        const Matrix v_hat = v_[i] / bc2;
        p.value.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
        if (!p.value.allFinite())
            throw TrainingDivergence("non-finite value in parameter '" + p.name + "' after update");
        p.zero_grad();
    }
}

}  // namespace vdsm
