#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace vdsm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A named dense parameter with a gradient buffer of the same shape.
struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;

    ParamTensor() = default;
    ParamTensor(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
};

// Handle into a Tape node.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are created in topological
// order, so the reverse sweep is a plain reverse index walk. One backward()
// per tape instance; build a fresh tape per loss evaluation.
class Tape {
public:
    Var constant(Matrix v);
    Var scalar(double v);
    Var param(ParamTensor& p);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_rowvec(Var a, Var b);  // (n,k) + (1,k)
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double c);

    Var exp(Var a);
    Var log(Var a);
    Var square(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var selu(Var a);
    Var softplus(Var a);
    Var log_half_erfc(Var a);

    Var tile_rows(Var a, Eigen::Index n);  // (1,k) -> (n,k)
    Var tile_cols(Var a, Eigen::Index k);  // (n,1) -> (n,k)

    Var sum(Var a);            // -> (1,1)
    Var row_sum(Var a);        // (n,k) -> (n,1)
    Var row_logsumexp(Var a);  // (n,k) -> (n,1)
    Var row_softmax(Var a);
    Var row_log_softmax(Var a);

    Var cols(Var a, Eigen::Index start, Eigen::Index count);
    Var rows_slice(Var a, Eigen::Index start, Eigen::Index count);
    Var hcat(const std::vector<Var>& parts);

    const Matrix& val(Var v) const;
    const Matrix& grad(Var v);
    Eigen::Index rows(Var v) const { return val(v).rows(); }
    Eigen::Index cols_of(Var v) const { return val(v).cols(); }
    double scalar_value(Var v) const;

    // Seeds d(loss)/d(loss)=1 and accumulates gradients into every bound
    // ParamTensor. Throws std::invalid_argument unless loss is 1x1.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix val;
        Matrix grad;
        std::function<void(Tape&, const Matrix&)> back;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<int, ParamTensor*>> bindings_;

    Var make(Matrix v, bool needs_grad, std::function<void(Tape&, const Matrix&)> back);
    void accumulate(int idx, const Matrix& g);
    const Node& node(Var v) const;
    bool needs(Var v) const { return node(v).needs_grad; }
    void check_same_shape(Var a, Var b, const char* op) const;
};

}  // namespace vdsm
