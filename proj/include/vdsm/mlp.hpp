#pragma once

#include <string>
#include <vector>

#include "vdsm/rng.hpp"
#include "vdsm/tape.hpp"

namespace vdsm {

enum class Activation { relu, tanh, selu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpSpec {
    Eigen::Index input_dim = 1;
    std::vector<Eigen::Index> hidden_dims;
    Eigen::Index output_dim = 1;
    Activation activation = Activation::tanh;
};

void validate_spec(const MlpSpec& spec);

// Fully-connected net; hidden layers activated, output layer linear.
// Weights init uniform +-sqrt(6/(fan_in+fan_out)), biases zero.
class Mlp {
public:
    Mlp() = default;
    Mlp(MlpSpec spec, RngStream& rng, std::string name_prefix);

    const MlpSpec& spec() const { return spec_; }
    const std::string& name_prefix() const { return prefix_; }

    // Pure batched forward; rows are samples. Thread-safe on a frozen model.
    Matrix forward(const Matrix& x) const;
    Vector forward(const Vector& x) const;

    // Training-graph forward.
    Var forward(Tape& tape, Var x);

    std::vector<ParamTensor*> parameters();
    std::vector<const ParamTensor*> parameters() const;

private:
    MlpSpec spec_;
    std::string prefix_;
    std::vector<ParamTensor> weights_;  // per layer: W (in x out)
    std::vector<ParamTensor> biases_;   // per layer: b (1 x out)
};

}  // namespace vdsm
