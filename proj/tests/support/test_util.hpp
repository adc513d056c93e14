#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdsm/tape.hpp"

namespace vdsm::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;
};

// Central finite differences against analytic gradients. loss_fn must be a
// pure function of the current parameter values; grad_fn fills p->grad for
// every parameter (after zeroing).
inline GradCheckResult finite_difference_check(const std::vector<ParamTensor*>& params,
                                               const std::function<double()>& loss_fn,
                                               const std::function<void()>& grad_fn,
                                               double h = 1e-5) {
    for (ParamTensor* p : params) p->zero_grad();
    grad_fn();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (ParamTensor* p : params) analytic.push_back(p->grad);

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamTensor& p = *params[pi];
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                const double saved = p.value(r, c);
                p.value(r, c) = saved + h;
                const double up = loss_fn();
                p.value(r, c) = saved - h;
                const double dn = loss_fn();
                p.value(r, c) = saved;
                const double numeric = (up - dn) / (2.0 * h);
                const double a = analytic[pi](r, c);
                const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
                const double rel = std::abs(a - numeric) / denom;
                if (rel > res.max_rel_err) {
                    res.max_rel_err = rel;
                    res.worst = p.name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
                }
            }
        }
    }
    for (ParamTensor* p : params) p->zero_grad();
    return res;
}

// Adaptive Simpson quadrature on a finite interval.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int depth = 40) {
    struct Impl {
        const std::function<double(double)>& f;
        double run(double a, double m, double b, double fa, double fm, double fb, double whole,
                   double tol, int depth) {
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
                return left + right + (left + right - whole) / 15.0;
            return run(a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
                   run(m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        }
    } impl{f};
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return impl.run(a, m, b, fa, fm, fb, whole, tol, depth);
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace vdsm::testing
