#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "support/test_util.hpp"
#include "vdsm/common.hpp"
#include "vdsm/dataset.hpp"
#include "vdsm/survival_metrics.hpp"

using namespace vdsm;

namespace {

std::string find_data_file(const std::string& name) {
    std::vector<std::string> candidates;
    if (const char* dir = std::getenv("VDSM_DATA_DIR"))
        candidates.push_back(std::string(dir) + "/" + name);
    candidates.push_back("data/" + name);
    candidates.push_back("../data/" + name);
    candidates.push_back("../../data/" + name);
    for (const auto& c : candidates) {
        std::ifstream in(c);
        if (in) return c;
    }
    return "";
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string support_fixture() {
    std::string numeric_cols = "age,num.co,meanbp,wblc,hrt,resp,temp,pafi,alb,bili,crea,sod,ph,"
                               "glucose,bun,urine,adlp,adls";
    std::string header = numeric_cols + ",sex,dzgroup,dzclass,income,race,ca,d.time,death";
    auto numeric_row = [](double base) {
        std::string s;
        for (int i = 0; i < 18; ++i) s += (i ? "," : "") + std::to_string(base + i);
        return s;
    };
    std::string body;
    body += numeric_row(1) + ",male,ARF/MOSF w/Sepsis,ARF/MOSF,under $11k,white,no,100,1\n";
    body += numeric_row(2) + ",female,COPD,COPD/CHF/Cirrhosis,$11-$25k,black,yes,200,0\n";
    // missing numeric (age) and missing race
    std::string r3 = numeric_row(3);
    r3.replace(0, r3.find(','), "NA");  // blank out age
    body += r3 + ",male,Lung Cancer,Cancer,NA,,metastatic,300,1\n";
    body += numeric_row(4) + ",female,COPD,COPD/CHF/Cirrhosis,under $11k,hispanic,no,400,1\n";
    body += numeric_row(5) + ",male,Cirrhosis,COPD/CHF/Cirrhosis,>$50k,asian,yes,0,0\n";
    return header + "\n" + body;
}

std::string flchain_fixture() {
    std::string header = "age,sex,sample.yr,kappa,lambda,flc.grp,creatinine,mgus,futime,death";
    std::string body;
    body += "70,F,1997,1.2,1.5,3,1.0,0,2000,0\n";
    body += "65,M,1996,0.8,1.1,2,NA,0,1500,1\n";  // dropped: missing creatinine
    body += "80,F,1998,2.0,2.5,7,1.4,1,800,1\n";
    body += "75,M,1995,1.1,1.3,4,0.9,0,0,1\n";  // futime 0 gets clamped
    return header + "\n" + body;
}

}  // namespace

TEST_CASE("csv reader handles quotes and reports bad rows") {
    TempFile f("csv_test.csv", "a,b\n1,\"x,y\"\n2,plain\n");
    CsvTable t = CsvTable::read(f.path);
    CHECK(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x,y");

    TempFile bad("csv_bad.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(CsvTable::read(bad.path), doctest::Contains("row 2"), IngestionError);
    CHECK_THROWS_AS(CsvTable::read("no_such_file.csv"), IngestionError);
}

TEST_CASE("support loader: one-hot layout, missing values, outcomes") {
    TempFile f("support_mini.csv", support_fixture());
    LoadedDataset ds = load_support(f.path);
    CHECK(ds.records.size() == 5);

    // 18 numeric + sex(2->1) + dzgroup(4) + dzclass(3) + income(3) + race(4) + ca(3)
    int race_cols = 0;
    for (const auto& n : ds.feature_names)
        if (n.rfind("race=", 0) == 0) ++race_cols;
    CHECK(race_cols == 4);  // asian, black, hispanic, white in the fixture
    CHECK(ds.feature_names.size() == 18 + 1 + 4 + 3 + 3 + 4 + 3);

    // missing numeric becomes NaN; missing categorical becomes an all-zero block
    CHECK(std::isnan(ds.records[2].x(0)));
    const auto race_off = static_cast<Eigen::Index>(18 + 1 + 4 + 3 + 3);
    CHECK(ds.records[2].x.segment(race_off, 4).cwiseAbs().sum() == 0.0);

    CHECK(ds.records[0].delta == 1);
    CHECK(ds.records[1].delta == 0);
    CHECK(ds.records[0].u == 100.0);
    // non-positive time clamped to half the smallest positive time
    CHECK(ds.records[4].u == doctest::Approx(50.0));
}

TEST_CASE("flchain loader drops rows with missing covariates") {
    TempFile f("flchain_mini.csv", flchain_fixture());
    LoadedDataset ds = load_flchain(f.path);
    CHECK(ds.records.size() == 3);  // the NA creatinine row is gone
    for (const auto& r : ds.records)
        for (Eigen::Index j = 0; j < r.x.size(); ++j) CHECK(!std::isnan(r.x(j)));

    // sex encoded {0,1} by sorted level order: F=0, M=1
    int sex_col = -1;
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
        if (ds.feature_names[j] == "sex") sex_col = static_cast<int>(j);
    REQUIRE(sex_col >= 0);
    CHECK(ds.records[0].x(sex_col) == 0.0);
    CHECK(ds.records[2].x(sex_col) == 1.0);
    // clamped futime: half of the smallest positive time (800)
    CHECK(ds.records[2].u == doctest::Approx(400.0));
}

TEST_CASE("split_standardize: ratio validation, sizes, determinism") {
    RngStream rng(3);
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < 100; ++i) {
        SurvivalRecord r;
        r.x = Vector::Constant(1, static_cast<double>(i));
        r.u = 1.0 + i;
        r.delta = i % 2;
        records.push_back(r);
    }
    CHECK_THROWS_AS(split_standardize(records, {0.5, 0.2, 0.2}, 0), std::invalid_argument);

    DatasetSplit s = split_standardize(records, {0.7, 0.1, 0.2}, 11);
    CHECK(s.train.size() == 70);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 20);

    DatasetSplit s2 = split_standardize(records, {0.7, 0.1, 0.2}, 11);
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].u == s2.train[i].u);

    // standardized train features: mean ~ 0, std ~ 1
    double mean = 0.0;
    for (const auto& r : s.train) mean += r.x(0);
    mean /= 70.0;
    CHECK(std::abs(mean) < 1e-10);
    double var = 0.0;
    for (const auto& r : s.train) var += (r.x(0) - mean) * (r.x(0) - mean);
    CHECK(std::sqrt(var / 70.0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("split_standardize imputes with the train median and never leaks") {
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < 60; ++i) {
        SurvivalRecord r;
        r.x = Vector::Constant(2, static_cast<double>(i));
        if (i % 7 == 0) r.x(1) = std::numeric_limits<double>::quiet_NaN();
        r.u = 1.0 + i;
        r.delta = 1;
        records.push_back(r);
    }
    DatasetSplit s1 = split_standardize(records, {0.7, 0.1, 0.2}, 5);
    for (const auto& part : {s1.train, s1.val, s1.test})
        for (const auto& r : part)
            for (int j = 0; j < 2; ++j) CHECK(!std::isnan(r.x(j)));

    // mutation hook: wreck everything outside the train membership and
    // confirm the fitted transform is untouched
    std::vector<std::size_t> train_ids;
    DatasetSplit probe = split_standardize(records, {0.7, 0.1, 0.2}, 5);
    // memberships are recoverable through the untouched time field
    std::set<double> train_times;
    for (const auto& r : probe.train) train_times.insert(r.u);
    auto mutated = records;
    for (auto& r : mutated)
        if (!train_times.count(r.u)) r.x.array() *= 1e6;
    DatasetSplit s2 = split_standardize(mutated, {0.7, 0.1, 0.2}, 5);
    CHECK((s1.transform.mean - s2.transform.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s1.transform.stddev - s2.transform.stddev).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s1.transform.median - s2.transform.median).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < s1.train.size(); ++i)
        CHECK(s1.train[i].x(0) == s2.train[i].x(0));
}

TEST_CASE("generate_synthetic: no censoring means every record is an event") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.censoring_rate = 0.0;
    SyntheticData data = generate_synthetic(spec, 500, 1);
    for (const auto& r : data.records) CHECK(r.delta == 1);
    CHECK(data.labels.size() == 500);
}

TEST_CASE("generate_synthetic: cluster frequencies follow pi") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.pi = {0.5, 0.3, 0.2};
    spec.censoring_rate = 0.0;
    SyntheticData data = generate_synthetic(spec, 100000, 2);
    Eigen::Array3d freq = Eigen::Array3d::Zero();
    for (int lbl : data.labels) freq(lbl) += 1.0;
    freq /= 100000.0;
    CHECK(std::abs(freq(0) - 0.5) < 0.02);
    CHECK(std::abs(freq(1) - 0.3) < 0.02);
    CHECK(std::abs(freq(2) - 0.2) < 0.02);
}

TEST_CASE("generate_synthetic: per-cluster medians match the Weibull formula") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.censoring_rate = 0.0;
    SyntheticData data = generate_synthetic(spec, 100000, 3);
    for (int c = 0; c < 3; ++c) {
        std::vector<double> times;
        for (std::size_t i = 0; i < data.records.size(); ++i)
            if (data.labels[i] == c) times.push_back(data.records[i].u);
        std::sort(times.begin(), times.end());
        const double med = times[times.size() / 2];
        const double expect = spec.beta[static_cast<std::size_t>(c)] *
                              std::pow(std::log(2.0), 1.0 / spec.eta[static_cast<std::size_t>(c)]);
        CHECK(std::abs(med - expect) / expect < 0.03);
    }
}

TEST_CASE("generate_synthetic: realized censoring rate tracks the request") {
    for (double rate : {0.2, 0.3, 0.5}) {
        SyntheticSpec spec = default_synthetic_spec();
        spec.censoring_rate = rate;
        SyntheticData data = generate_synthetic(spec, 10000, 4);
        double censored = 0.0;
        for (const auto& r : data.records) censored += r.delta == 0 ? 1.0 : 0.0;
        CHECK(std::abs(censored / 10000.0 - rate) < 0.03);
    }
}

TEST_CASE("record cache round trip preserves exact values") {
    SyntheticData data = generate_synthetic(default_synthetic_spec(), 200, 5);
    save_records_csv("records_rt.csv", data.records);
    LoadedDataset back = load_records_csv("records_rt.csv");
    REQUIRE(back.records.size() == data.records.size());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        CHECK(back.records[i].u == data.records[i].u);
        CHECK(back.records[i].delta == data.records[i].delta);
        CHECK((back.records[i].x - data.records[i].x).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove("records_rt.csv");

    save_labels_csv("labels_rt.csv", data.labels);
    std::vector<int> labels = load_labels_csv("labels_rt.csv");
    CHECK(labels == data.labels);
    std::remove("labels_rt.csv");
}

TEST_CASE("real SUPPORT file characteristics" * doctest::skip(find_data_file("support2.csv").empty())) {
    const std::string path = find_data_file("support2.csv");
    LoadedDataset ds = load_support(path);
    CHECK(ds.records.size() == 9105);

    std::vector<double> times;
    std::vector<int> events;
    for (const auto& r : ds.records) {
        times.push_back(r.u);
        events.push_back(r.delta);
    }
    auto q = event_quantiles(times, events);
    CHECK(q[1] > 48.0);
    CHECK(q[1] < 68.0);

    // one-hot race block matches the distinct category census
    CsvTable raw = CsvTable::read(path);
    const int race_idx = raw.column("race");
    std::set<std::string> race_levels;
    for (const auto& row : raw.rows) {
        const std::string& v = row[static_cast<std::size_t>(race_idx)];
        if (!v.empty() && v != "NA") race_levels.insert(v);
    }
    int race_cols = 0;
    for (const auto& n : ds.feature_names)
        if (n.rfind("race=", 0) == 0) ++race_cols;
    CHECK(race_cols == static_cast<int>(race_levels.size()));
}

TEST_CASE("real FLCHAIN file characteristics" * doctest::skip(find_data_file("flchain.csv").empty())) {
    const std::string path = find_data_file("flchain.csv");
    LoadedDataset ds = load_flchain(path);
    CHECK(ds.records.size() == 6524);
    int sex_col = -1;
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
        if (ds.feature_names[j] == "sex") sex_col = static_cast<int>(j);
    REQUIRE(sex_col >= 0);
    for (const auto& r : ds.records) {
        CHECK((r.x(sex_col) == 0.0 || r.x(sex_col) == 1.0));
        for (Eigen::Index j = 0; j < r.x.size(); ++j) CHECK(!std::isnan(r.x(j)));
    }
}
