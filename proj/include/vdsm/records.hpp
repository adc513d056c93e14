#pragma once

#include <stdexcept>
#include <vector>

#include "vdsm/tape.hpp"

namespace vdsm {

// One right-censored observation: covariates, event flag, and the event or
// censoring time as flagged by delta.
struct SurvivalRecord {
    Vector x;
    int delta = 1;  // 1 event, 0 censored
    double u = 0.0;
};

inline void validate_record(const SurvivalRecord& r) {
    if (!(r.u > 0.0)) throw std::invalid_argument("SurvivalRecord: time must be positive");
    if (r.delta != 0 && r.delta != 1)
        throw std::invalid_argument("SurvivalRecord: delta must be 0 or 1");
}

// Dense batch view of a record list.
struct Batch {
    Matrix x;               // n x d
    Vector u;               // n
    Eigen::VectorXi delta;  // n

    Eigen::Index size() const { return u.size(); }

    static Batch from_records(const std::vector<SurvivalRecord>& records) {
        Batch b;
        const Eigen::Index n = static_cast<Eigen::Index>(records.size());
        if (n == 0) return b;
        const Eigen::Index d = records[0].x.size();
        b.x.resize(n, d);
        b.u.resize(n);
        b.delta.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const SurvivalRecord& r = records[static_cast<std::size_t>(i)];
            validate_record(r);
            if (r.x.size() != d) throw std::invalid_argument("Batch: ragged covariate vectors");
            b.x.row(i) = r.x.transpose();
            b.u(i) = r.u;
            b.delta(i) = r.delta;
        }
        return b;
    }

    Batch subset(int delta_value) const {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < size(); ++i)
            if (delta(i) == delta_value) keep.push_back(i);
        Batch out;
        out.x.resize(static_cast<Eigen::Index>(keep.size()), x.cols());
        out.u.resize(static_cast<Eigen::Index>(keep.size()));
        out.delta.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            out.x.row(static_cast<Eigen::Index>(j)) = x.row(keep[j]);
            out.u(static_cast<Eigen::Index>(j)) = u(keep[j]);
            out.delta(static_cast<Eigen::Index>(j)) = delta(keep[j]);
        }
        return out;
    }
};

}  // namespace vdsm
