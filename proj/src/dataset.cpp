#include "vdsm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vdsm/common.hpp"
#include "vdsm/survival_metrics.hpp"  // format_double

namespace vdsm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "NULL";
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw IngestionError("row " + std::to_string(row) + ": cannot parse '" + s +
                             "' in column '" + col + "'");
    }
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t row) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw IngestionError("row " + std::to_string(row) + ": unterminated quote");
    out.push_back(field);
    return out;
}

// clamp non-positive recorded times to half the smallest positive one
void enforce_positive_times(std::vector<SurvivalRecord>& records) {
    double min_pos = std::numeric_limits<double>::infinity();
    for (const auto& r : records)
        if (r.u > 0.0) min_pos = std::min(min_pos, r.u);
    if (!std::isfinite(min_pos)) min_pos = 1.0;
    for (auto& r : records)
        if (!(r.u > 0.0)) r.u = 0.5 * min_pos;
}

}  // namespace

CsvTable CsvTable::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t row = 0;
    if (!std::getline(in, line)) throw IngestionError("'" + path + "' is empty");
    table.header = split_csv_line(line, row);
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = split_csv_line(line, row);
        if (fields.size() != table.header.size())
            throw IngestionError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(table.header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

int CsvTable::column(const std::string& name) const {
    auto find = [&](const std::string& key) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == key) return static_cast<int>(i);
        return -1;
    };
    int idx = find(name);
    if (idx >= 0) return idx;
    std::string alt = name;
    for (char& c : alt) {
        if (c == '.') c = '_';
        else if (c == '_') c = '.';
    }
    return find(alt);
}

namespace {

struct ColumnPlan {
    std::vector<std::string> numeric;
    std::vector<std::string> categorical;
    std::string time_col;
    std::string event_col;
};

LoadedDataset load_tabular(const CsvTable& table, const ColumnPlan& plan, bool drop_missing) {
    std::vector<int> numeric_idx, cat_idx;
    for (const auto& name : plan.numeric) {
        const int idx = table.column(name);
        if (idx < 0) throw IngestionError("missing column '" + name + "'");
        numeric_idx.push_back(idx);
    }
    for (const auto& name : plan.categorical) {
        const int idx = table.column(name);
        if (idx < 0) throw IngestionError("missing column '" + name + "'");
        cat_idx.push_back(idx);
    }
    const int time_idx = table.column(plan.time_col);
    const int event_idx = table.column(plan.event_col);
    if (time_idx < 0) throw IngestionError("missing column '" + plan.time_col + "'");
    if (event_idx < 0) throw IngestionError("missing column '" + plan.event_col + "'");

    // census of categorical levels (sorted, missing excluded)
    std::vector<std::vector<std::string>> levels(cat_idx.size());
    for (std::size_t c = 0; c < cat_idx.size(); ++c) {
        std::set<std::string> seen;
        for (const auto& row : table.rows) {
            const std::string& v = row[static_cast<std::size_t>(cat_idx[c])];
            if (!is_missing(v)) seen.insert(v);
        }
        levels[c].assign(seen.begin(), seen.end());
        if (levels[c].empty())
            throw IngestionError("categorical column '" + plan.categorical[c] +
                                 "' has no observed values");
    }

    LoadedDataset out;
    for (const auto& name : plan.numeric) out.feature_names.push_back(name);
    for (std::size_t c = 0; c < cat_idx.size(); ++c) {
        if (levels[c].size() <= 2) {
            out.feature_names.push_back(plan.categorical[c]);
        } else {
            for (const auto& lv : levels[c])
                out.feature_names.push_back(plan.categorical[c] + "=" + lv);
        }
    }
    const Eigen::Index dim = static_cast<Eigen::Index>(out.feature_names.size());

    for (std::size_t ri = 0; ri < table.rows.size(); ++ri) {
        const auto& row = table.rows[ri];
        SurvivalRecord rec;
        rec.x = Vector::Zero(dim);
        bool missing_any = false;
        Eigen::Index f = 0;
        for (std::size_t c = 0; c < numeric_idx.size(); ++c) {
            const std::string& v = row[static_cast<std::size_t>(numeric_idx[c])];
            if (is_missing(v)) {
                rec.x(f) = kNaN;
                missing_any = true;
            } else {
                rec.x(f) = parse_double(v, ri + 1, plan.numeric[c]);
            }
            ++f;
        }
        for (std::size_t c = 0; c < cat_idx.size(); ++c) {
            const std::string& v = row[static_cast<std::size_t>(cat_idx[c])];
            const auto& lvls = levels[c];
            if (lvls.size() <= 2) {
                if (is_missing(v)) {
                    rec.x(f) = kNaN;
                    missing_any = true;
                } else {
                    const auto it = std::find(lvls.begin(), lvls.end(), v);
                    if (it == lvls.end())
                        throw IngestionError("row " + std::to_string(ri + 1) +
                                             ": unexpected level '" + v + "'");
                    rec.x(f) = static_cast<double>(it - lvls.begin());
                }
                ++f;
            } else {
                if (is_missing(v)) {
                    missing_any = true;  // all-zero block
                } else {
                    const auto it = std::find(lvls.begin(), lvls.end(), v);
                    if (it == lvls.end())
                        throw IngestionError("row " + std::to_string(ri + 1) +
                                             ": unexpected level '" + v + "'");
                    rec.x(f + (it - lvls.begin())) = 1.0;
                }
                f += static_cast<Eigen::Index>(lvls.size());
            }
        }

        const std::string& tv = row[static_cast<std::size_t>(time_idx)];
        const std::string& ev = row[static_cast<std::size_t>(event_idx)];
        if (is_missing(tv) || is_missing(ev))
            throw IngestionError("row " + std::to_string(ri + 1) + ": missing outcome");
        rec.u = parse_double(tv, ri + 1, plan.time_col);
        const double d = parse_double(ev, ri + 1, plan.event_col);
        if (d != 0.0 && d != 1.0)
            throw IngestionError("row " + std::to_string(ri + 1) + ": event flag must be 0/1");
        rec.delta = static_cast<int>(d);

        if (drop_missing && missing_any) continue;
        out.records.push_back(std::move(rec));
    }
    enforce_positive_times(out.records);
    return out;
}

}  // namespace

LoadedDataset load_support(const std::string& path) {
    ColumnPlan plan;
    plan.numeric = {"age", "num.co", "meanbp",  "wblc", "hrt", "resp",
                    "temp", "pafi",   "alb",     "bili", "crea", "sod",
                    "ph",  "glucose", "bun",     "urine", "adlp", "adls"};
    plan.categorical = {"sex", "dzgroup", "dzclass", "income", "race", "ca"};
    plan.time_col = "d.time";
    plan.event_col = "death";
    return load_tabular(CsvTable::read(path), plan, /*drop_missing=*/false);
}

LoadedDataset load_flchain(const std::string& path) {
    ColumnPlan plan;
    plan.numeric = {"age", "sample.yr", "kappa", "lambda", "flc.grp", "creatinine", "mgus"};
    plan.categorical = {"sex"};
    plan.time_col = "futime";
    plan.event_col = "death";
    return load_tabular(CsvTable::read(path), plan, /*drop_missing=*/true);
}

Vector Standardizer::apply(const Vector& raw) const {
    if (raw.size() != mean.size()) throw std::invalid_argument("Standardizer: size mismatch");
    Vector out(raw.size());
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        const double v = std::isnan(raw(j)) ? median(j) : raw(j);
        out(j) = (v - mean(j)) / stddev(j);
    }
    return out;
}

void Standardizer::apply_in_place(std::vector<SurvivalRecord>& records) const {
    for (auto& r : records) r.x = apply(r.x);
}

DatasetSplit split_standardize(const std::vector<SurvivalRecord>& records,
                               std::array<double, 3> ratios, std::uint64_t seed) {
    if (records.empty()) throw std::invalid_argument("split_standardize: empty dataset");
    const double rsum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9)
        throw std::invalid_argument("split_standardize: ratios must sum to 1");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream rng(seed);
    rng.shuffle(order);

    const auto n = static_cast<std::int64_t>(records.size());
    auto n_train = static_cast<std::int64_t>(std::llround(ratios[0] * static_cast<double>(n)));
    auto n_val = static_cast<std::int64_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::clamp<std::int64_t>(n_train, 0, n);
    n_val = std::clamp<std::int64_t>(n_val, 0, n - n_train);

    DatasetSplit split;
    for (std::int64_t i = 0; i < n; ++i) {
        const SurvivalRecord& r = records[order[static_cast<std::size_t>(i)]];
        if (i < n_train) split.train.push_back(r);
        else if (i < n_train + n_val) split.val.push_back(r);
        else split.test.push_back(r);
    }
    if (split.train.empty()) throw std::invalid_argument("split_standardize: empty train split");

    const Eigen::Index dim = split.train[0].x.size();
    Standardizer tf;
    tf.median.resize(dim);
    tf.mean.resize(dim);
    tf.stddev.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        std::vector<double> observed;
        for (const auto& r : split.train)
            if (!std::isnan(r.x(j))) observed.push_back(r.x(j));
        if (observed.empty()) {
            tf.median(j) = 0.0;
        } else {
            std::sort(observed.begin(), observed.end());
            const std::size_t m = observed.size();
            tf.median(j) = m % 2 == 1 ? observed[m / 2]
                                      : 0.5 * (observed[m / 2 - 1] + observed[m / 2]);
        }
        double s = 0.0;
        for (const auto& r : split.train) s += std::isnan(r.x(j)) ? tf.median(j) : r.x(j);
        tf.mean(j) = s / static_cast<double>(split.train.size());
        double sq = 0.0;
        for (const auto& r : split.train) {
            const double v = std::isnan(r.x(j)) ? tf.median(j) : r.x(j);
            sq += (v - tf.mean(j)) * (v - tf.mean(j));
        }
        const double sd = std::sqrt(sq / static_cast<double>(split.train.size()));
        tf.stddev(j) = sd < 1e-12 ? 1.0 : sd;
    }
    tf.apply_in_place(split.train);
    tf.apply_in_place(split.val);
    tf.apply_in_place(split.test);
    split.transform = std::move(tf);
    return split;
}

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.k = 3;
    spec.pi = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    spec.mu.resize(3, 2);
    spec.mu << 0.0, 0.0, 6.0, 0.0, 0.0, 6.0;
    spec.sigma = Matrix::Constant(3, 2, 0.7);
    spec.eta = {6.0, 6.0, 6.0};
    spec.beta = {1.0, 4.0, 16.0};
    spec.censoring_rate = 0.3;
    return spec;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
    if (spec.k < 1 || static_cast<int>(spec.pi.size()) != spec.k)
        throw std::invalid_argument("generate_synthetic: pi must have k entries");
    if (std::abs(std::accumulate(spec.pi.begin(), spec.pi.end(), 0.0) - 1.0) > 1e-9)
        throw std::invalid_argument("generate_synthetic: pi must sum to 1");
    if (spec.mu.rows() != spec.k || spec.sigma.rows() != spec.k ||
        spec.mu.cols() != spec.sigma.cols())
        throw std::invalid_argument("generate_synthetic: mu/sigma must be k x d");
    if (static_cast<int>(spec.eta.size()) != spec.k ||
        static_cast<int>(spec.beta.size()) != spec.k)
        throw std::invalid_argument("generate_synthetic: eta/beta must have k entries");
    if (!(spec.censoring_rate >= 0.0 && spec.censoring_rate < 1.0))
        throw std::invalid_argument("generate_synthetic: censoring_rate must lie in [0,1)");

    RngStream rng(seed);
    const Eigen::Index d = spec.mu.cols();
    SyntheticData out;
    std::vector<double> event_times(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int c = rng.categorical(spec.pi);
        SurvivalRecord r;
        r.x.resize(d);
        for (Eigen::Index j = 0; j < d; ++j) r.x(j) = spec.mu(c, j) + spec.sigma(c, j) * rng.normal();
        const double t = spec.beta[static_cast<std::size_t>(c)] *
                         std::pow(-std::log(rng.uniform()),
                                  1.0 / spec.eta[static_cast<std::size_t>(c)]);
        event_times[static_cast<std::size_t>(i)] = t;
        r.u = t;
        r.delta = 1;
        out.records.push_back(std::move(r));
        out.labels.push_back(c);
    }

    if (spec.censoring_rate > 0.0) {
        // solve the exponential rate so the expected censored fraction over
        // the drawn event times matches the request
        auto expected_frac = [&](double lambda) {
            double s = 0.0;
            for (double t : event_times) s += 1.0 - std::exp(-lambda * t);
            return s / static_cast<double>(n);
        };
        double lo = 0.0, hi = 1.0;
        while (expected_frac(hi) < spec.censoring_rate) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (expected_frac(mid) < spec.censoring_rate ? lo : hi) = mid;
        }
        const double lambda = 0.5 * (lo + hi);
        for (int i = 0; i < n; ++i) {
            const double c = rng.exponential(lambda);
            auto& r = out.records[static_cast<std::size_t>(i)];
            if (c < r.u) {
                r.u = c;
                r.delta = 0;
            }
        }
    }
    return out;
}

void save_records_csv(const std::string& path, const std::vector<SurvivalRecord>& records,
                      const std::vector<std::string>& feature_names) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open '" + path + "' for writing");
    const Eigen::Index d = records.empty() ? 0 : records[0].x.size();
    out << "id";
    for (Eigen::Index j = 0; j < d; ++j) {
        if (static_cast<std::size_t>(j) < feature_names.size())
            out << "," << feature_names[static_cast<std::size_t>(j)];
        else
            out << ",x" << j;
    }
    out << ",delta,u\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        out << i;
        for (Eigen::Index j = 0; j < d; ++j) out << "," << format_double(records[i].x(j));
        out << "," << records[i].delta << "," << format_double(records[i].u) << "\n";
    }
}

LoadedDataset load_records_csv(const std::string& path) {
    CsvTable table = CsvTable::read(path);
    if (table.header.size() < 3 || table.header.front() != "id" ||
        table.header[table.header.size() - 2] != "delta" || table.header.back() != "u")
        throw IngestionError("'" + path + "' is not a record cache file");
    LoadedDataset out;
    const std::size_t d = table.header.size() - 3;
    out.feature_names.assign(table.header.begin() + 1, table.header.end() - 2);
    for (std::size_t ri = 0; ri < table.rows.size(); ++ri) {
        const auto& row = table.rows[ri];
        SurvivalRecord rec;
        rec.x.resize(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j)
            rec.x(static_cast<Eigen::Index>(j)) =
                is_missing(row[j + 1]) ? kNaN : parse_double(row[j + 1], ri + 1, out.feature_names[j]);
        rec.delta = static_cast<int>(parse_double(row[d + 1], ri + 1, "delta"));
        rec.u = parse_double(row[d + 2], ri + 1, "u");
        validate_record(rec);
        out.records.push_back(std::move(rec));
    }
    return out;
}

void save_labels_csv(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open '" + path + "' for writing");
    out << "id,cluster\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << "," << labels[i] << "\n";
}

std::vector<int> load_labels_csv(const std::string& path) {
    CsvTable table = CsvTable::read(path);
    std::vector<int> out;
    const int col = table.column("cluster");
    if (col < 0) throw IngestionError("'" + path + "' has no cluster column");
    for (std::size_t ri = 0; ri < table.rows.size(); ++ri)
        out.push_back(static_cast<int>(
            parse_double(table.rows[ri][static_cast<std::size_t>(col)], ri + 1, "cluster")));
    return out;
}

}  // namespace vdsm
