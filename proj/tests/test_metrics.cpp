#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/test_util.hpp"
#include "vdsm/common.hpp"
#include "vdsm/rng.hpp"
#include "vdsm/survival_metrics.hpp"

using namespace vdsm;

namespace {

// naive censoring-KM for oracle computations, independent of the library path
double oracle_g_left(const std::vector<double>& times, const std::vector<int>& events, double t) {
    std::vector<double> distinct;
    for (double x : times) distinct.push_back(x);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double g = 1.0;
    for (double u : distinct) {
        if (u >= t) break;
        double at_risk = 0.0, deaths = 0.0, cens = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] >= u) at_risk += 1.0;
            if (times[i] == u && events[i] == 1) deaths += 1.0;
            if (times[i] == u && events[i] == 0) cens += 1.0;
        }
        if (cens > 0.0) g *= 1.0 - cens / (at_risk - deaths);
    }
    return g;
}

double oracle_ctd(const std::vector<double>& risks, const std::vector<double>& times,
                  const std::vector<int>& events, double horizon) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (events[i] != 1 || times[i] > horizon) continue;
        const double g = oracle_g_left(times, events, times[i]);
        if (g <= 0.0) continue;
        for (std::size_t j = 0; j < times.size(); ++j) {
            if (times[j] <= times[i]) continue;
            const double w = 1.0 / (g * g);
            num += w * (risks[i] > risks[j] ? 1.0 : risks[i] == risks[j] ? 0.5 : 0.0);
            den += w;
        }
    }
    return num / den;
}

double oracle_auc(const std::vector<double>& risks, const std::vector<double>& times,
                  const std::vector<int>& events, double horizon) {
    double num = 0.0, wsum = 0.0;
    double n_controls = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j)
        if (times[j] > horizon) n_controls += 1.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (events[i] != 1 || times[i] > horizon) continue;
        const double g = oracle_g_left(times, events, times[i]);
        if (g <= 0.0) continue;
        const double w = 1.0 / g;
        wsum += w;
        for (std::size_t j = 0; j < times.size(); ++j) {
            if (times[j] <= horizon) continue;
            num += w * (risks[i] > risks[j] ? 1.0 : risks[i] == risks[j] ? 0.5 : 0.0);
        }
    }
    return num / (wsum * n_controls);
}

}  // namespace

TEST_CASE("kaplan_meier: four distinct events, no censoring") {
    StepFunction s = kaplan_meier({1, 2, 3, 4}, {1, 1, 1, 1});
    CHECK(s(0.5) == doctest::Approx(1.0));
    CHECK(s(1.0) == doctest::Approx(0.75));
    CHECK(s(2.0) == doctest::Approx(0.5));
    CHECK(s(3.0) == doctest::Approx(0.25));
    CHECK(s(4.0) == doctest::Approx(0.0));
    CHECK(s(9.0) == doctest::Approx(0.0));
}

TEST_CASE("kaplan_meier: all censored stays at one") {
    StepFunction s = kaplan_meier({1, 2, 3}, {0, 0, 0});
    CHECK(s(0.5) == doctest::Approx(1.0));
    CHECK(s(100.0) == doctest::Approx(1.0));
}

TEST_CASE("kaplan_meier hand product-limit with censoring") {
    StepFunction s = kaplan_meier({1, 2, 3}, {1, 0, 1});
    CHECK(s(1.0) == doctest::Approx(2.0 / 3.0));
    CHECK(s(2.5) == doctest::Approx(2.0 / 3.0));
    CHECK(s(3.0) == doctest::Approx(0.0));
}

TEST_CASE("kaplan_meier rejects bad input") {
    CHECK_THROWS_AS(kaplan_meier({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(kaplan_meier({0.0}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(kaplan_meier({1.0}, {2}), std::invalid_argument);
}

TEST_CASE("kaplan_meier equals the empirical survival without censoring") {
    RngStream rng(5);
    std::vector<double> times;
    std::vector<int> events;
    for (int i = 0; i < 200; ++i) {
        times.push_back(rng.uniform(0.1, 10.0));
        events.push_back(1);
    }
    StepFunction s = kaplan_meier(times, events);
    for (double t : {0.5, 2.0, 5.0, 9.5}) {
        double above = 0.0;
        for (double u : times)
            if (u > t) above += 1.0;
        CHECK(s(t) == doctest::Approx(above / 200.0).epsilon(1e-12));
    }
}

TEST_CASE("censoring KM processes deaths before censorings at ties") {
    // at t=2 one death and one censoring: censoring sees a risk set of 2
    StepFunction g = censoring_kaplan_meier({1, 2, 2, 3}, {1, 1, 0, 0});
    CHECK(g.left_limit(2.0) == doctest::Approx(1.0));
    CHECK(g(2.0) == doctest::Approx(0.5));
}

TEST_CASE("event_quantiles linear interpolation") {
    std::vector<double> times;
    std::vector<int> events;
    for (int i = 1; i <= 100; ++i) {
        times.push_back(i);
        events.push_back(1);
    }
    auto q = event_quantiles(times, events);
    CHECK(q[0] == doctest::Approx(25.75));
    CHECK(q[1] == doctest::Approx(50.5));
    CHECK(q[2] == doctest::Approx(75.25));

    auto single = event_quantiles({5.0, 7.0}, {1, 0});
    CHECK(single[0] == doctest::Approx(5.0));
    CHECK(single[1] == doctest::Approx(5.0));
    CHECK(single[2] == doctest::Approx(5.0));

    CHECK_THROWS_AS(event_quantiles({1.0, 2.0}, {0, 0}), std::invalid_argument);
}

TEST_CASE("concordance_td closed cases") {
    std::vector<double> times{1, 2, 3};
    std::vector<int> events{1, 1, 1};
    CHECK(concordance_td({0.9, 0.5, 0.1}, times, events, 3.0) == doctest::Approx(1.0));
    CHECK(concordance_td({0.1, 0.5, 0.9}, times, events, 3.0) == doctest::Approx(0.0));
    CHECK(concordance_td({0.4, 0.4, 0.4}, times, events, 3.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(concordance_td({0.9}, {2.0}, {0}, 1.0), UndefinedMetric);
}

TEST_CASE("concordance_td censored instance matches the pair-enumeration oracle") {
    std::vector<double> times{1, 2, 3};
    std::vector<int> events{1, 0, 1};
    std::vector<double> risks{0.9, 0.2, 0.1};
    // hand computation: G(1-) = 1 for the only eligible case i=0
    CHECK(concordance_td(risks, times, events, 3.0) ==
          doctest::Approx(oracle_ctd(risks, times, events, 3.0)).epsilon(1e-15));

    RngStream rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_int(20));
        std::vector<double> t, r;
        std::vector<int> e;
        for (int i = 0; i < n; ++i) {
            t.push_back(rng.uniform(0.5, 10.0));
            r.push_back(rng.uniform(0.0, 1.0));
            e.push_back(rng.uniform() < 0.35 ? 0 : 1);
        }
        const double horizon = rng.uniform(2.0, 9.0);
        bool defined = true;
        double expect = 0.0;
        try {
            expect = oracle_ctd(r, t, e, horizon);
            if (!std::isfinite(expect)) defined = false;
        } catch (...) {
            defined = false;
        }
        if (!defined) continue;
        CHECK(concordance_td(r, t, e, horizon) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("cumulative_dynamic_auc closed cases and the double-loop oracle") {
    std::vector<double> times{1, 2, 3, 4, 5, 6};
    std::vector<int> events{1, 1, 0, 1, 0, 1};
    std::vector<double> perfect{0.9, 0.8, 0.7, 0.6, 0.2, 0.1};
    CHECK(cumulative_dynamic_auc(perfect, times, events, 3.5) == doctest::Approx(1.0));
    std::vector<double> flat{0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
    CHECK(cumulative_dynamic_auc(flat, times, events, 3.5) == doctest::Approx(0.5));

    std::vector<double> mixed{0.9, 0.3, 0.5, 0.8, 0.2, 0.4};
    CHECK(cumulative_dynamic_auc(mixed, times, events, 3.5) ==
          doctest::Approx(oracle_auc(mixed, times, events, 3.5)).epsilon(1e-12));

    CHECK_THROWS_AS(cumulative_dynamic_auc(flat, times, events, 10.0), UndefinedMetric);
    CHECK_THROWS_AS(cumulative_dynamic_auc(flat, times, events, 0.5), UndefinedMetric);
}

TEST_CASE("metrics are invariant under strictly monotone risk transforms") {
    RngStream rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 12;
        std::vector<double> t, r, r2;
        std::vector<int> e;
        for (int i = 0; i < n; ++i) {
            t.push_back(rng.uniform(0.5, 8.0));
            r.push_back(rng.uniform(0.0, 1.0));
            r2.push_back(std::exp(3.0 * r.back()) - 0.5);  // strictly increasing
            e.push_back(rng.uniform() < 0.3 ? 0 : 1);
        }
        const double horizon = 4.0;
        try {
            CHECK(concordance_td(r, t, e, horizon) ==
                  doctest::Approx(concordance_td(r2, t, e, horizon)).epsilon(1e-12));
            CHECK(cumulative_dynamic_auc(r, t, e, horizon) ==
                  doctest::Approx(cumulative_dynamic_auc(r2, t, e, horizon)).epsilon(1e-12));
        } catch (const UndefinedMetric&) {
        }
    }
}

TEST_CASE("no censoring at infinite horizon equals Harrell's C") {
    RngStream rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 25;
        std::vector<double> t, r;
        std::vector<int> e;
        for (int i = 0; i < n; ++i) {
            t.push_back(rng.uniform(0.5, 10.0));
            r.push_back(rng.uniform(0.0, 1.0));
            e.push_back(1);
        }
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (t[i] >= t[j]) continue;
                den += 1.0;
                num += r[i] > r[j] ? 1.0 : r[i] == r[j] ? 0.5 : 0.0;
            }
        CHECK(concordance_td(r, t, e, 1e18) == doctest::Approx(num / den).epsilon(1e-13));
    }
}

TEST_CASE("random risks center both metrics near one half") {
    RngStream rng(41);
    std::vector<double> cs, as;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 40;
        std::vector<double> t, r;
        std::vector<int> e;
        for (int i = 0; i < n; ++i) {
            t.push_back(rng.uniform(0.5, 10.0));
            r.push_back(rng.uniform(0.0, 1.0));
            e.push_back(rng.uniform() < 0.3 ? 0 : 1);
        }
        try {
            cs.push_back(concordance_td(r, t, e, 5.0));
            as.push_back(cumulative_dynamic_auc(r, t, e, 5.0));
        } catch (const UndefinedMetric&) {
        }
    }
    REQUIRE(cs.size() > 150);
    CHECK(testing::mean_of(cs) > 0.45);
    CHECK(testing::mean_of(cs) < 0.55);
    CHECK(testing::mean_of(as) > 0.45);
    CHECK(testing::mean_of(as) < 0.55);
}

TEST_CASE("adjusted_rand_index reference values") {
    CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 2}) ==
          doctest::Approx(0.5714285714).epsilon(1e-6));
    // independent labelings hover near zero
    RngStream rng(55);
    std::vector<int> a, b;
    for (int i = 0; i < 2000; ++i) {
        a.push_back(static_cast<int>(rng.uniform_int(3)));
        b.push_back(static_cast<int>(rng.uniform_int(3)));
    }
    CHECK(std::abs(adjusted_rand_index(a, b)) < 0.05);
}

TEST_CASE("EvalReport aggregation and serialization") {
    EvalReport rep;
    rep.quantiles = {0.25, 0.5, 0.75};
    rep.horizons = {10.0, 20.0, 30.0};
    rep.ctd.resize(2, 3);
    rep.ctd << 0.7, 0.6, 0.55, 0.8, 0.7, 0.65;
    rep.auc.resize(2, 3);
    rep.auc << 0.75, 0.68, 0.6, 0.85, 0.72, 0.7;

    CHECK(rep.mean(rep.ctd, 0) == doctest::Approx(0.75));
    CHECK(rep.stddev(rep.ctd, 0) == doctest::Approx(std::sqrt(0.005)).epsilon(1e-9));

    const std::string csv = rep.to_csv();
    CHECK(csv.find("quantile,horizon,ctd_mean,ctd_std,auc_mean,auc_std,n_seeds") == 0);
    CHECK(csv.find("0.25,10,") != std::string::npos);

    const std::string table = rep.to_table_text("dsm");
    CHECK(table.find("Time-dependent Concordance-Index") != std::string::npos);
    CHECK(table.find("ROC-AUC") != std::string::npos);
    CHECK(table.find("Quantiles of Event Times") != std::string::npos);
    CHECK(table.find("25%\t50%\t75%") != std::string::npos);
    CHECK(table.find("dsm") != std::string::npos);
}

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0625}) {
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
}
