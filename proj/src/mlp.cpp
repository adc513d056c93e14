#include "vdsm/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace vdsm {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::selu: return "selu";
    }
    throw std::invalid_argument("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "selu") return Activation::selu;
    throw std::invalid_argument("unknown activation: " + name);
}

void validate_spec(const MlpSpec& spec) {
    if (spec.input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
    if (spec.output_dim < 1) throw std::invalid_argument("MlpSpec: output_dim must be >= 1");
    for (Eigen::Index h : spec.hidden_dims)
        if (h < 1) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
}

namespace {
double apply_activation(Activation a, double x) {
    constexpr double lambda = 1.0507009873554804934;
    constexpr double alpha = 1.6732632423543772848;
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::selu: return x > 0.0 ? lambda * x : lambda * alpha * std::expm1(x);
    }
    return x;
}
}  // namespace

Mlp::Mlp(MlpSpec spec, RngStream& rng, std::string name_prefix)
    : spec_(std::move(spec)), prefix_(std::move(name_prefix)) {
    validate_spec(spec_);
    std::vector<Eigen::Index> dims;
    dims.push_back(spec_.input_dim);
    for (Eigen::Index h : spec_.hidden_dims) dims.push_back(h);
    dims.push_back(spec_.output_dim);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Eigen::Index fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < fan_in; ++i)
            for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
        weights_.emplace_back(prefix_ + ".W" + std::to_string(l), std::move(w));
        biases_.emplace_back(prefix_ + ".b" + std::to_string(l), Matrix::Zero(1, fan_out));
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    if (x.cols() != spec_.input_dim)
        throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.cols()) +
                                    " features, spec expects " + std::to_string(spec_.input_dim));
    Matrix h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Matrix z = h * weights_[l].value;
        z.rowwise() += biases_[l].value.row(0);
        if (l + 1 < weights_.size())
            z = z.unaryExpr([this](double v) { return apply_activation(spec_.activation, v); });
        h = std::move(z);
    }
    return h;
}

Vector Mlp::forward(const Vector& x) const {
    Matrix out = forward(Matrix(x.transpose()));
    return out.row(0).transpose();
}

Var Mlp::forward(Tape& tape, Var x) {
    if (tape.cols_of(x) != spec_.input_dim)
        throw std::invalid_argument("Mlp::forward: tape input dimension mismatch");
    Var h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Var w = tape.param(weights_[l]);
        Var b = tape.param(biases_[l]);
        Var z = tape.add_rowvec(tape.matmul(h, w), b);
        if (l + 1 < weights_.size()) {
            switch (spec_.activation) {
                case Activation::relu: z = tape.relu(z); break;
                case Activation::tanh: z = tape.tanh(z); break;
                case Activation::selu: z = tape.selu(z); break;
            }
        }
        h = z;
    }
    return h;
}

std::vector<ParamTensor*> Mlp::parameters() {
    std::vector<ParamTensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<const ParamTensor*> Mlp::parameters() const {
    std::vector<const ParamTensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

}  // namespace vdsm
