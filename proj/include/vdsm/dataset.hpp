#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vdsm/records.hpp"
#include "vdsm/rng.hpp"

namespace vdsm {

// Minimal CSV support: header row, comma delimiter, optional double quotes,
// '.' decimal point, UTF-8.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static CsvTable read(const std::string& path);
    // column index by name; tries the dot/underscore variant too; -1 if absent
    int column(const std::string& name) const;
};

struct LoadedDataset {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> feature_names;
};

// Train-fitted feature transform: median imputation for missing entries
// followed by z-scoring. Fitted on the training split only.
struct Standardizer {
    Vector median;
    Vector mean;
    Vector stddev;

    Vector apply(const Vector& raw) const;
    void apply_in_place(std::vector<SurvivalRecord>& records) const;
};

struct DatasetSplit {
    std::vector<SurvivalRecord> train, val, test;
    Standardizer transform;
};

// Patient covariates with one-hot encoded categoricals; missing numeric
// entries are kept as NaN for split-time imputation. See
// docs/data_dictionary.md for the pinned column schema.
LoadedDataset load_support(const std::string& path);

// Rows with any missing covariate are dropped; remaining covariates are
// fully observed.
LoadedDataset load_flchain(const std::string& path);

DatasetSplit split_standardize(const std::vector<SurvivalRecord>& records,
                               std::array<double, 3> ratios, std::uint64_t seed);

struct SyntheticSpec {
    int k = 3;
    std::vector<double> pi;    // k, sums to 1
    Matrix mu;                 // k x d covariate means
    Matrix sigma;              // k x d covariate standard deviations
    std::vector<double> eta;   // k Weibull shapes
    std::vector<double> beta;  // k Weibull scales
    double censoring_rate = 0.3;
};

// Three well-separated covariate blobs with strongly staggered Weibull
// scales; the benchmark generator used by the synthetic experiments.
SyntheticSpec default_synthetic_spec();

struct SyntheticData {
    std::vector<SurvivalRecord> records;
    std::vector<int> labels;  // generating cluster per record
};

// c ~ Cat(pi); x ~ N(mu_c, sigma_c^2); t ~ Weibull(eta_c, beta_c); censoring
// exponential with the rate solved by bisection to match censoring_rate.
SyntheticData generate_synthetic(const SyntheticSpec& spec, int n, std::uint64_t seed);

// Record cache: same CSV dialect with id, features, delta, u columns.
void save_records_csv(const std::string& path, const std::vector<SurvivalRecord>& records,
                      const std::vector<std::string>& feature_names = {});
LoadedDataset load_records_csv(const std::string& path);

void save_labels_csv(const std::string& path, const std::vector<int>& labels);
std::vector<int> load_labels_csv(const std::string& path);

}  // namespace vdsm
