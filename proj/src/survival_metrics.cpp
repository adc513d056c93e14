#include "vdsm/survival_metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vdsm/common.hpp"

namespace vdsm {

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() != values_.size())
        throw std::invalid_argument("StepFunction: knots/values size mismatch");
    double prev_t = -std::numeric_limits<double>::infinity();
    double prev_v = 1.0;
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        if (knots_[i] <= prev_t) throw std::invalid_argument("StepFunction: knots must increase");
        if (values_[i] > prev_v + 1e-12 || values_[i] < -1e-12)
            throw std::invalid_argument("StepFunction: values must be non-increasing in [0,1]");
        prev_t = knots_[i];
        prev_v = values_[i];
    }
}

double StepFunction::operator()(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - knots_.begin() - 1)];
}

double StepFunction::left_limit(double t) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - knots_.begin() - 1)];
}

namespace {

struct TimeCounts {
    double time;
    int deaths = 0;
    int censored = 0;
};

std::vector<TimeCounts> tally(const std::vector<double>& times, const std::vector<int>& events) {
    if (times.empty()) throw std::invalid_argument("kaplan_meier: empty input");
    if (times.size() != events.size())
        throw std::invalid_argument("kaplan_meier: times/events size mismatch");
    std::map<double, TimeCounts> by_time;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0)) throw std::invalid_argument("kaplan_meier: times must be positive");
        if (events[i] != 0 && events[i] != 1)
            throw std::invalid_argument("kaplan_meier: events must be 0/1");
        TimeCounts& tc = by_time[times[i]];
        tc.time = times[i];
        tc.deaths += events[i];
        tc.censored += 1 - events[i];
    }
    std::vector<TimeCounts> out;
    out.reserve(by_time.size());
    for (auto& [t, tc] : by_time) out.push_back(tc);
    return out;
}

}  // namespace

StepFunction kaplan_meier(const std::vector<double>& times, const std::vector<int>& events) {
    auto counts = tally(times, events);
    double at_risk = static_cast<double>(times.size());
    double surv = 1.0;
    std::vector<double> knots, values;
    for (const TimeCounts& tc : counts) {
        if (tc.deaths > 0) {
            surv *= 1.0 - static_cast<double>(tc.deaths) / at_risk;
            knots.push_back(tc.time);
            values.push_back(surv);
        }
        at_risk -= tc.deaths + tc.censored;
    }
    return StepFunction(std::move(knots), std::move(values));
}

StepFunction censoring_kaplan_meier(const std::vector<double>& times,
                                    const std::vector<int>& events) {
    auto counts = tally(times, events);
    double at_risk = static_cast<double>(times.size());
    double surv = 1.0;
    std::vector<double> knots, values;
    for (const TimeCounts& tc : counts) {
        if (tc.censored > 0) {
            // deaths at the same instant leave the risk set first
            const double denom = at_risk - static_cast<double>(tc.deaths);
            surv *= 1.0 - static_cast<double>(tc.censored) / denom;
            knots.push_back(tc.time);
            values.push_back(std::max(surv, 0.0));
        }
        at_risk -= tc.deaths + tc.censored;
    }
    return StepFunction(std::move(knots), std::move(values));
}

std::array<double, 3> event_quantiles(const std::vector<double>& times,
                                      const std::vector<int>& events) {
    if (times.size() != events.size())
        throw std::invalid_argument("event_quantiles: size mismatch");
    std::vector<double> uncensored;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (events[i] == 1) uncensored.push_back(times[i]);
    if (uncensored.empty())
        throw std::invalid_argument("event_quantiles: no uncensored events in the data");
    std::sort(uncensored.begin(), uncensored.end());
    std::array<double, 3> out{};
    const std::array<double, 3> ps{0.25, 0.5, 0.75};
    const std::size_t n = uncensored.size();
    for (int q = 0; q < 3; ++q) {
        const double h = static_cast<double>(n - 1) * ps[static_cast<std::size_t>(q)];
        const std::size_t lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, n - 1);
        out[static_cast<std::size_t>(q)] =
            uncensored[lo] + (h - static_cast<double>(lo)) * (uncensored[hi] - uncensored[lo]);
    }
    return out;
}

namespace {

void validate_metric_inputs(const std::vector<double>& risks, const std::vector<double>& times,
                            const std::vector<int>& events, double horizon) {
    if (risks.size() != times.size() || risks.size() != events.size())
        throw std::invalid_argument("metric: input size mismatch");
    if (!(horizon > 0.0)) throw std::invalid_argument("metric: horizon must be positive");
    for (double r : risks)
        if (!std::isfinite(r)) throw std::invalid_argument("metric: risks must be finite");
}

double tie_aware(double ri, double rj) {
    if (ri > rj) return 1.0;
    if (ri == rj) return 0.5;
    return 0.0;
}

}  // namespace

MetricDetail concordance_td_detailed(const std::vector<double>& risks,
                                     const std::vector<double>& times,
                                     const std::vector<int>& events, double horizon) {
    validate_metric_inputs(risks, times, events, horizon);
    const StepFunction g = censoring_kaplan_meier(times, events);
    const std::size_t n = times.size();
    double num = 0.0, den = 0.0;
    MetricDetail detail;
    for (std::size_t i = 0; i < n; ++i) {
        if (events[i] != 1 || times[i] > horizon) continue;
        const double gi = g.left_limit(times[i]);
        if (gi <= 0.0) {
            for (std::size_t j = 0; j < n; ++j)
                if (times[j] > times[i]) ++detail.dropped;
            continue;
        }
        const double w = 1.0 / (gi * gi);
        for (std::size_t j = 0; j < n; ++j) {
            if (times[j] <= times[i]) continue;
            num += w * tie_aware(risks[i], risks[j]);
            den += w;
        }
    }
    if (den <= 0.0)
        throw UndefinedMetric("concordance_td: no comparable pairs at horizon " +
                              std::to_string(horizon));
    detail.value = num / den;
    return detail;
}

double concordance_td(const std::vector<double>& risks, const std::vector<double>& times,
                      const std::vector<int>& events, double horizon) {
    return concordance_td_detailed(risks, times, events, horizon).value;
}

MetricDetail cumulative_dynamic_auc_detailed(const std::vector<double>& risks,
                                             const std::vector<double>& times,
                                             const std::vector<int>& events, double horizon) {
    validate_metric_inputs(risks, times, events, horizon);
    const StepFunction g = censoring_kaplan_meier(times, events);
    const std::size_t n = times.size();
    std::vector<std::size_t> controls;
    for (std::size_t j = 0; j < n; ++j)
        if (times[j] > horizon) controls.push_back(j);

    double num = 0.0, case_weight = 0.0;
    MetricDetail detail;
    bool any_case = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (events[i] != 1 || times[i] > horizon) continue;
        any_case = true;
        const double gi = g.left_limit(times[i]);
        if (gi <= 0.0) {
            detail.dropped += controls.size();
            continue;
        }
        const double w = 1.0 / gi;
        case_weight += w;
        for (std::size_t j : controls) num += w * tie_aware(risks[i], risks[j]);
    }
    if (!any_case || case_weight <= 0.0)
        throw UndefinedMetric("cumulative_dynamic_auc: no cases at horizon " +
                              std::to_string(horizon));
    if (controls.empty())
        throw UndefinedMetric("cumulative_dynamic_auc: no controls at horizon " +
                              std::to_string(horizon));
    detail.value = num / (case_weight * static_cast<double>(controls.size()));
    return detail;
}

double cumulative_dynamic_auc(const std::vector<double>& risks, const std::vector<double>& times,
                              const std::vector<int>& events, double horizon) {
    return cumulative_dynamic_auc_detailed(risks, times, events, horizon).value;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: size mismatch");
    if (a.empty()) throw std::invalid_argument("adjusted_rand_index: empty input");
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> row_sums, col_sums;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cells[{a[i], b[i]}] += 1.0;
        row_sums[a[i]] += 1.0;
        col_sums[b[i]] += 1.0;
    }
    auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, v] : cells) sum_cells += choose2(v);
    for (const auto& [key, v] : row_sums) sum_rows += choose2(v);
    for (const auto& [key, v] : col_sums) sum_cols += choose2(v);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (sum_cells - expected) / (max_index - expected);
}

double EvalReport::mean(const Matrix& m, Eigen::Index j) const { return m.col(j).mean(); }

double EvalReport::stddev(const Matrix& m, Eigen::Index j) const {
    const Eigen::Index n = m.rows();
    if (n < 2) return 0.0;
    const double mu = m.col(j).mean();
    return std::sqrt((m.col(j).array() - mu).square().sum() / static_cast<double>(n - 1));
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string EvalReport::to_csv() const {
    std::string out = "quantile,horizon,ctd_mean,ctd_std,auc_mean,auc_std,n_seeds\n";
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(horizons.size()); ++j) {
        out += format_double(quantiles[static_cast<std::size_t>(j)]) + ",";
        out += format_double(horizons[static_cast<std::size_t>(j)]) + ",";
        out += format_double(mean(ctd, j)) + "," + format_double(stddev(ctd, j)) + ",";
        out += format_double(mean(auc, j)) + "," + format_double(stddev(auc, j)) + ",";
        out += std::to_string(n_seeds()) + "\n";
    }
    return out;
}

namespace {
std::string cell(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f \xc2\xb1 %.4f", mean, sd);
    return buf;
}
}  // namespace

std::string EvalReport::to_table_text(const std::string& model_label) const {
    std::ostringstream os;
    auto block = [&](const char* title, const Matrix& m) {
        os << title << "\n";
        os << "Quantiles of Event Times\n";
        os << "Models";
        for (double q : quantiles) {
            char head[32];
            std::snprintf(head, sizeof(head), "%.0f%%", q * 100.0);
            os << "\t" << head;
        }
        os << "\n" << model_label;
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << "\t" << cell(mean(m, j), stddev(m, j));
        os << "\n";
    };
    block("Time-dependent Concordance-Index", ctd);
    os << "\n";
    block("ROC-AUC", auc);
    return os.str();
}

}  // namespace vdsm
