#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vdsm/tape.hpp"

namespace vdsm {

// Right-continuous step function on (0, inf) starting at 1.0 with
// non-increasing values in [0,1]; the carrier for product-limit estimates.
class StepFunction {
public:
    StepFunction() = default;
    StepFunction(std::vector<double> knots, std::vector<double> values);

    double operator()(double t) const;   // value at t (right-continuous)
    double left_limit(double t) const;   // value just before t

    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> knots_;
    std::vector<double> values_;
};

// Product-limit estimate of the event survival function. Ties are resolved
// by processing deaths before censorings at equal times.
StepFunction kaplan_meier(const std::vector<double>& times, const std::vector<int>& events);

// Product-limit estimate of the censoring survival function G(t) = P(C > t),
// with deaths removed from the risk set before same-time censorings.
StepFunction censoring_kaplan_meier(const std::vector<double>& times,
                                    const std::vector<int>& events);

// 25/50/75% quantiles of the uncensored event times, linear interpolation.
std::array<double, 3> event_quantiles(const std::vector<double>& times,
                                      const std::vector<int>& events);

struct MetricDetail {
    double value = 0.0;
    std::size_t dropped = 0;  // comparisons discarded because G-hat vanished
};

// Truncated time-dependent concordance with inverse-censoring weights
// 1/G(t_i-)^2 on comparable pairs (delta_i = 1, t_i <= horizon, t_i < t_j);
// risk ties count one half. Throws UndefinedMetric without comparable pairs.
MetricDetail concordance_td_detailed(const std::vector<double>& risks,
                                     const std::vector<double>& times,
                                     const std::vector<int>& events, double horizon);
double concordance_td(const std::vector<double>& risks, const std::vector<double>& times,
                      const std::vector<int>& events, double horizon);

// Cumulative/dynamic ROC-AUC at the horizon: cases are events with
// t_i <= horizon weighted by 1/G(t_i-), controls survive past the horizon.
MetricDetail cumulative_dynamic_auc_detailed(const std::vector<double>& risks,
                                             const std::vector<double>& times,
                                             const std::vector<int>& events, double horizon);
double cumulative_dynamic_auc(const std::vector<double>& risks, const std::vector<double>& times,
                              const std::vector<int>& events, double horizon);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Scores per seed and horizon with mean +- sample std aggregation.
struct EvalReport {
    std::vector<double> quantiles;  // e.g. 0.25, 0.5, 0.75
    std::vector<double> horizons;
    Matrix ctd;  // seeds x horizons
    Matrix auc;  // seeds x horizons

    Eigen::Index n_seeds() const { return ctd.rows(); }
    double mean(const Matrix& m, Eigen::Index j) const;
    double stddev(const Matrix& m, Eigen::Index j) const;

    std::string to_csv() const;
    std::string to_table_text(const std::string& model_label) const;
};

// Shortest round-trip decimal representation (deterministic across runs).
std::string format_double(double v);

}  // namespace vdsm
