#include "vdsm/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

namespace {
constexpr double kSeluLambda = 1.0507009873554804934;
constexpr double kSeluAlpha = 1.6732632423543772848;
}  // namespace

Var Tape::make(Matrix v, bool needs_grad, std::function<void(Tape&, const Matrix&)> back) {
    Node n;
    n.val = std::move(v);
    n.needs_grad = needs_grad;
    n.back = needs_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("Tape: invalid Var handle");
    return nodes_[static_cast<std::size_t>(v.idx)];
}

void Tape::accumulate(int idx, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    n.grad += g;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
    const Matrix& x = val(a);
    const Matrix& y = val(b);
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

const Matrix& Tape::val(Var v) const { return node(v).val; }

const Matrix& Tape::grad(Var v) {
    node(v);  // range check
    Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    // untouched grad reads as zeros of the right shape
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    return n.grad;
}

double Tape::scalar_value(Var v) const {
    const Matrix& m = val(v);
    if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("scalar_value: not 1x1");
    return m(0, 0);
}

Var Tape::constant(Matrix v) { return make(std::move(v), false, nullptr); }

Var Tape::scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

Var Tape::param(ParamTensor& p) {
    Var v = make(p.value, true, nullptr);
    bindings_.emplace_back(v.idx, &p);
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const Matrix& x = val(a);
    const Matrix& y = val(b);
    if (x.cols() != y.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    int ia = a.idx, ib = b.idx;
    return make(x * y, needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g * t.nodes_[ib].val.transpose());
        t.accumulate(ib, t.nodes_[ia].val.transpose() * g);
    });
}

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    int ia = a.idx, ib = b.idx;
    return make(val(a) + val(b), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var Tape::add_rowvec(Var a, Var b) {
    const Matrix& x = val(a);
    const Matrix& y = val(b);
    if (y.rows() != 1 || y.cols() != x.cols())
        throw std::invalid_argument("add_rowvec: expected (n,k) + (1,k)");
    int ia = a.idx, ib = b.idx;
    Matrix out = x;
    out.rowwise() += y.row(0);
    return make(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g.colwise().sum());
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    int ia = a.idx, ib = b.idx;
    return make(val(a) - val(b), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, -g);
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    int ia = a.idx, ib = b.idx;
    return make(val(a).cwiseProduct(val(b)), needs(a) || needs(b),
                [ia, ib](Tape& t, const Matrix& g) {
                    t.accumulate(ia, g.cwiseProduct(t.nodes_[ib].val));
                    t.accumulate(ib, g.cwiseProduct(t.nodes_[ia].val));
                });
}

Var Tape::div(Var a, Var b) {
    check_same_shape(a, b, "div");
    int ia = a.idx, ib = b.idx;
    return make(val(a).cwiseQuotient(val(b)), needs(a) || needs(b),
                [ia, ib](Tape& t, const Matrix& g) {
                    const Matrix& x = t.nodes_[ia].val;
                    const Matrix& y = t.nodes_[ib].val;
                    t.accumulate(ia, g.cwiseQuotient(y));
                    t.accumulate(ib, (-g.array() * x.array() / (y.array() * y.array())).matrix());
                });
}

Var Tape::neg(Var a) {
    int ia = a.idx;
    return make(-val(a), needs(a), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, -g); });
}

Var Tape::scale(Var a, double s) {
    int ia = a.idx;
    return make(val(a) * s, needs(a), [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var Tape::add_scalar(Var a, double c) {
    int ia = a.idx;
    return make((val(a).array() + c).matrix(), needs(a),
                [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var Tape::exp(Var a) {
    int ia = a.idx;
    Matrix y = val(a).array().exp().matrix();
    Var out = make(std::move(y), needs(a), nullptr);
    if (needs(a)) {
        const Matrix cached = val(out);
        nodes_.back().back = [ia, cached](Tape& t, const Matrix& g) {
            t.accumulate(ia, g.cwiseProduct(cached));
        };
    }
    return out;
}

Var Tape::log(Var a) {
    int ia = a.idx;
    return make(val(a).array().log().matrix(), needs(a), [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, g.cwiseQuotient(t.nodes_[ia].val));
    });
}

Var Tape::square(Var a) {
    int ia = a.idx;
    return make(val(a).array().square().matrix(), needs(a), [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, 2.0 * g.cwiseProduct(t.nodes_[ia].val));
    });
}

Var Tape::tanh(Var a) {
    int ia = a.idx;
    Matrix y = val(a).array().tanh().matrix();
    Var out = make(std::move(y), needs(a), nullptr);
    if (needs(a)) {
        const Matrix cached = val(out);
        nodes_.back().back = [ia, cached](Tape& t, const Matrix& g) {
            t.accumulate(ia, (g.array() * (1.0 - cached.array().square())).matrix());
        };
    }
    return out;
}

Var Tape::relu(Var a) {
    int ia = a.idx;
    return make(val(a).array().max(0.0).matrix(), needs(a), [ia](Tape& t, const Matrix& g) {
        const Matrix& x = t.nodes_[ia].val;
        t.accumulate(ia, (g.array() * (x.array() > 0.0).cast<double>()).matrix());
    });
}

Var Tape::selu(Var a) {
    int ia = a.idx;
    const Matrix& x = val(a);
    Matrix y = (x.array() > 0.0)
                   .select(kSeluLambda * x.array(),
                           kSeluLambda * kSeluAlpha * (x.array().exp() - 1.0))
                   .matrix();
    return make(std::move(y), needs(a), [ia](Tape& t, const Matrix& g) {
        const auto& x = t.nodes_[ia].val.array();
        Matrix d = (x > 0.0)
                       .select(Eigen::ArrayXXd::Constant(x.rows(), x.cols(), kSeluLambda),
                               kSeluLambda * kSeluAlpha * x.exp())
                       .matrix();
        t.accumulate(ia, g.cwiseProduct(d));
    });
}

Var Tape::softplus(Var a) {
    int ia = a.idx;
    Matrix y = val(a).unaryExpr([](double v) { return vdsm::softplus(v); });
    return make(std::move(y), needs(a), [ia](Tape& t, const Matrix& g) {
        Matrix d = t.nodes_[ia].val.unaryExpr([](double v) { return sigmoid(v); });
        t.accumulate(ia, g.cwiseProduct(d));
    });
}

Var Tape::log_half_erfc(Var a) {
    int ia = a.idx;
    Matrix y = val(a).unaryExpr([](double v) { return vdsm::log_half_erfc(v); });
    return make(std::move(y), needs(a), [ia](Tape& t, const Matrix& g) {
        Matrix d = t.nodes_[ia].val.unaryExpr([](double v) { return d_log_half_erfc(v); });
        t.accumulate(ia, g.cwiseProduct(d));
    });
}

Var Tape::tile_rows(Var a, Eigen::Index n) {
    const Matrix& x = val(a);
    if (x.rows() != 1) throw std::invalid_argument("tile_rows: expected a row vector");
    int ia = a.idx;
    return make(x.replicate(n, 1), needs(a), [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, g.colwise().sum());
    });
}

Var Tape::tile_cols(Var a, Eigen::Index k) {
    const Matrix& x = val(a);
    if (x.cols() != 1) throw std::invalid_argument("tile_cols: expected a column vector");
    int ia = a.idx;
    return make(x.replicate(1, k), needs(a), [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, g.rowwise().sum());
    });
}

Var Tape::sum(Var a) {
    int ia = a.idx;
    Matrix y(1, 1);
    y(0, 0) = val(a).sum();
    return make(std::move(y), needs(a), [ia](Tape& t, const Matrix& g) {
        const Matrix& x = t.nodes_[ia].val;
        t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

Var Tape::row_sum(Var a) {
    int ia = a.idx;
    Matrix y = val(a).rowwise().sum();
    return make(std::move(y), needs(a), [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, g.replicate(1, t.nodes_[ia].val.cols()));
    });
}

Var Tape::row_logsumexp(Var a) {
    const Matrix& x = val(a);
    const Eigen::Index n = x.rows(), k = x.cols();
    Matrix y(n, 1);
    Matrix soft(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = x.row(i).maxCoeff();
        const Eigen::ArrayXd e = (x.row(i).array() - m).exp();
        const double s = e.sum();
        y(i, 0) = m + std::log(s);
        soft.row(i) = (e / s).matrix();
    }
    int ia = a.idx;
    return make(std::move(y), needs(a), [ia, soft](Tape& t, const Matrix& g) {
        t.accumulate(ia, (soft.array().colwise() * g.col(0).array()).matrix());
    });
}

Var Tape::row_softmax(Var a) {
    const Matrix& x = val(a);
    const Eigen::Index n = x.rows(), k = x.cols();
    Matrix y(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = x.row(i).maxCoeff();
        const Eigen::ArrayXd e = (x.row(i).array() - m).exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    int ia = a.idx;
    Var out = make(std::move(y), needs(a), nullptr);
    if (needs(a)) {
        const Matrix cached = val(out);
        nodes_.back().back = [ia, cached](Tape& t, const Matrix& g) {
            const Eigen::ArrayXd dot = (g.array() * cached.array()).rowwise().sum();
            t.accumulate(ia, (cached.array() * (g.array().colwise() - dot)).matrix());
        };
    }
    return out;
}

Var Tape::row_log_softmax(Var a) {
    const Matrix& x = val(a);
    const Eigen::Index n = x.rows(), k = x.cols();
    Matrix y(n, k);
    Matrix soft(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = x.row(i).maxCoeff();
        const Eigen::ArrayXd sh = x.row(i).array() - m;
        const Eigen::ArrayXd e = sh.exp();
        const double s = e.sum();
        y.row(i) = (sh - std::log(s)).matrix();
        soft.row(i) = (e / s).matrix();
    }
    int ia = a.idx;
    return make(std::move(y), needs(a), [ia, soft](Tape& t, const Matrix& g) {
        const Eigen::ArrayXd rs = g.array().rowwise().sum();
        t.accumulate(ia, (g.array() - soft.array().colwise() * rs).matrix());
    });
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index count) {
    const Matrix& x = val(a);
    if (start < 0 || count < 0 || start + count > x.cols())
        throw std::invalid_argument("cols: slice out of range");
    int ia = a.idx;
    return make(x.middleCols(start, count), needs(a),
                [ia, start, count](Tape& t, const Matrix& g) {
                    Node& n = t.nodes_[static_cast<std::size_t>(ia)];
                    if (!n.needs_grad) return;
                    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
                    n.grad.middleCols(start, count) += g;
                });
}

Var Tape::rows_slice(Var a, Eigen::Index start, Eigen::Index count) {
    const Matrix& x = val(a);
    if (start < 0 || count < 0 || start + count > x.rows())
        throw std::invalid_argument("rows_slice: slice out of range");
    int ia = a.idx;
    return make(x.middleRows(start, count), needs(a),
                [ia, start, count](Tape& t, const Matrix& g) {
                    Node& n = t.nodes_[static_cast<std::size_t>(ia)];
                    if (!n.needs_grad) return;
                    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
                    n.grad.middleRows(start, count) += g;
                });
}

Var Tape::hcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hcat: no inputs");
    const Eigen::Index n = val(parts[0]).rows();
    Eigen::Index total = 0;
    bool any_grad = false;
    for (Var p : parts) {
        if (val(p).rows() != n) throw std::invalid_argument("hcat: row count mismatch");
        total += val(p).cols();
        any_grad = any_grad || needs(p);
    }
    Matrix y(n, total);
    std::vector<int> idxs;
    std::vector<Eigen::Index> offsets, widths;
    Eigen::Index off = 0;
    for (Var p : parts) {
        const Matrix& x = val(p);
        y.middleCols(off, x.cols()) = x;
        idxs.push_back(p.idx);
        offsets.push_back(off);
        widths.push_back(x.cols());
        off += x.cols();
    }
    return make(std::move(y), any_grad,
                [idxs, offsets, widths](Tape& t, const Matrix& g) {
                    for (std::size_t i = 0; i < idxs.size(); ++i)
                        t.accumulate(idxs[i], g.middleCols(offsets[i], widths[i]));
                });
}

void Tape::backward(Var loss) {
    const Matrix& l = val(loss);
    if (l.rows() != 1 || l.cols() != 1)
        throw std::invalid_argument("backward: loss must be a 1x1 scalar node");
    for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.idx); ++i) nodes_[i].grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(loss.idx)].grad = Matrix::Ones(1, 1);
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back && n.needs_grad && n.grad.size() != 0) n.back(*this, n.grad);
    }
    for (auto& [idx, p] : bindings_) {
        if (idx <= loss.idx && nodes_[static_cast<std::size_t>(idx)].grad.size() != 0)
            p->grad += nodes_[static_cast<std::size_t>(idx)].grad;
    }
}

}  // namespace vdsm
