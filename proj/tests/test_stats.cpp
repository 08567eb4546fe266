#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mstk/stats.hpp"
#include "mstk/synthetic.hpp"

using namespace mstk;
using namespace mstk::stats;

namespace {

// profiles with one covariate column "PRF.IT" driven by a latent score
std::vector<TextProfile> synthetic_profiles(std::mt19937_64& eng, std::size_t n,
                                            double slope_per_pct,
                                            std::vector<double> thresholds) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<TextProfile> out;
    for (std::size_t i = 0; i < n; ++i) {
        TextProfile tp;
        tp.writing_id = "t" + std::to_string(i);
        tp.nationality = (i % 3 == 0) ? "FR" : (i % 3 == 1) ? "DE" : "ES";
        double pct = 100.0 * unif(eng);
        tp.medians["PRF"] = {pct, 50.0, 50.0};
        tp.counts["PRF"] = 3;
        double eta = slope_per_pct * pct;
        // sample from the proportional-odds model
        std::vector<double> cum;
        for (double a : thresholds) cum.push_back(num::sigmoid(a - eta));
        cum.push_back(1.0);
        double u = unif(eng);
        int level = 0;
        while (u > cum[static_cast<std::size_t>(level)]) ++level;
        tp.cefr = static_cast<Cefr>(level);
        out.push_back(std::move(tp));
    }
    return out;
}

ms::Occurrence make_occ(const std::string& wid, const std::string& ms_name, Cefr cefr) {
    ms::Occurrence o;
    o.ms = ms_name;
    o.writing_id = wid;
    o.cefr = cefr;
    o.nationality = "FR";
    o.topic = "T1";
    return o;
}

}  // namespace

TEST_CASE("text-level medians use the even/odd conventions") {
    std::vector<ms::Occurrence> occs;
    std::vector<model::PredictedDistribution> preds;
    occs.reserve(8);

    auto push = [&](const std::string& wid, std::vector<double> p) {
        occs.push_back(make_occ(wid, "PRF", Cefr::B1));
        model::PredictedDistribution pd;
        pd.occurrence = &occs.back();
        pd.ms = "PRF";
        pd.probabilities = std::move(p);
        preds.push_back(std::move(pd));
    };
    push("w1", {0.2, 0.3, 0.5});
    push("w2", {0.1, 0.5, 0.4});
    push("w2", {0.4, 0.3, 0.3});
    push("w2", {0.9, 0.05, 0.05});
    push("w3", {0.2, 0.4, 0.4});
    push("w3", {0.4, 0.2, 0.4});

    auto profiles = aggregate_text_median(preds);
    REQUIRE(profiles.size() == 3);
    for (const auto& tp : profiles)
        for (const auto& [ms_name, medians] : tp.medians)
            for (double v : medians) {
                CHECK(v >= 0.0);
                CHECK(v <= 100.0);
            }
    CHECK(profiles[0].medians.at("PRF")[0] == doctest::Approx(20.0));
    CHECK(profiles[0].medians.at("PRF")[1] == doctest::Approx(30.0));
    CHECK(profiles[0].medians.at("PRF")[2] == doctest::Approx(50.0));
    CHECK(profiles[1].medians.at("PRF")[0] == doctest::Approx(40.0));  // odd count
    CHECK(profiles[2].medians.at("PRF")[0] == doctest::Approx(30.0));  // even count
    CHECK(profiles[1].counts.at("PRF") == 3);
}

TEST_CASE("texts missing a requested microsystem are dropped and counted") {
    std::mt19937_64 eng(8);
    auto profiles = synthetic_profiles(eng, 40, 0.02, {0.5, 1.5, 2.5});
    profiles[3].medians.erase("PRF");
    profiles[17].medians.erase("PRF");
    auto specs = ms::builtin_microsystems();
    OrdinalData data = make_ordinal_data(profiles, {"PRF.IT"}, specs, false);
    CHECK(data.rows.size() == 38);
    CHECK(data.n_dropped == 2);
}

TEST_CASE("ordinal gradient matches finite differences") {
    std::mt19937_64 eng(17);
    auto profiles = synthetic_profiles(eng, 120, 0.03, {0.5, 1.5, 2.5});
    auto specs = ms::builtin_microsystems();
    OrdinalData data = make_ordinal_data(profiles, {"PRF.IT"}, specs, false);
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (int point = 0; point < 5; ++point) {
        std::size_t dim = data.levels.size() - 1 + data.covariate_names.size();
        std::vector<double> params(dim);
        // ordered thresholds plus small slopes
        double base = -1.0 + gauss(eng);
        for (std::size_t j = 0; j + data.covariate_names.size() < dim; ++j)
            params[j] = base + 0.8 * static_cast<double>(j) + 0.1 * std::fabs(gauss(eng));
        for (std::size_t j = dim - data.covariate_names.size(); j < dim; ++j)
            params[j] = 0.02 * gauss(eng);
        std::vector<double> grad;
        ordinal_loglik(params, data, 1e-8, &grad);
        const double h = 1e-5;
        double num2 = 0.0, den2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            auto plus = params, minus = params;
            plus[j] += h;
            minus[j] -= h;
            double fd = (ordinal_loglik(plus, data, 1e-8, nullptr) -
                         ordinal_loglik(minus, data, 1e-8, nullptr)) /
                        (2 * h);
            num2 += (grad[j] - fd) * (grad[j] - fd);
            den2 += fd * fd;
        }
        CHECK(std::sqrt(num2 / std::max(den2, 1e-12)) < 1e-4);
    }
}

TEST_CASE("ordinal fit recovers a known slope and keeps thresholds ordered") {
    std::mt19937_64 eng(2718);
    const double true_beta = 0.05;
    auto profiles = synthetic_profiles(eng, 2500, true_beta, {1.0, 2.8, 4.2});
    auto specs = ms::builtin_microsystems();
    OrdinalData data = make_ordinal_data(profiles, {"PRF.IT"}, specs, false);
    OrdinalModel m = fit_ordinal(data);
    CHECK(m.converged);
    for (std::size_t j = 1; j < m.thresholds.size(); ++j)
        CHECK(m.thresholds[j] > m.thresholds[j - 1]);
    auto report = odds_ratio_report(m);
    double target = std::exp(true_beta);
    CHECK(report.entries[0].ci_low <= target);
    CHECK(report.entries[0].ci_high >= target);

    // cumulative probabilities are monotone and sum to one
    double xb = m.slopes[0] * 42.0;
    double prev = 0.0, total = 0.0;
    for (std::size_t j = 0; j <= m.thresholds.size(); ++j) {
        double upper = j == m.thresholds.size() ? 1.0 : num::sigmoid(m.thresholds[j] - xb);
        CHECK(upper >= prev);
        total += upper - prev;
        prev = upper;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("permuted labels give an odds ratio near one") {
    std::mt19937_64 eng(99);
    auto profiles = synthetic_profiles(eng, 1500, 0.0, {0.0, 1.5, 3.0});
    auto specs = ms::builtin_microsystems();
    OrdinalData data = make_ordinal_data(profiles, {"PRF.IT"}, specs, false);
    OrdinalModel m = fit_ordinal(data);
    auto report = odds_ratio_report(m);
    CHECK(report.entries[0].odds_ratio == doctest::Approx(1.0).epsilon(0.01));
    CHECK(report.entries[0].p_value > 0.05);
    CHECK_FALSE(report.entries[0].significant);
}

TEST_CASE("odds ratio arithmetic and formatting hooks") {
    OrdinalModel m;
    m.levels = {"A1", "A2"};
    m.thresholds = {0.3};
    m.covariate_names = {"X"};
    m.slopes = {std::log(2.0)};
    m.slope_se = {0.1};
    auto report = odds_ratio_report(m);
    CHECK(report.entries[0].odds_ratio == doctest::Approx(2.0));
    CHECK(report.entries[0].ci_low == doctest::Approx(std::exp(std::log(2.0) - 0.196)));
    CHECK(report.entries[0].ci_high == doctest::Approx(std::exp(std::log(2.0) + 0.196)));

    m.slopes = {0.0};
    auto null_report = odds_ratio_report(m);
    CHECK(null_report.entries[0].odds_ratio == doctest::Approx(1.0));
    CHECK(null_report.entries[0].ci_low * null_report.entries[0].ci_high ==
          doctest::Approx(1.0));  // symmetric in log space
}

TEST_CASE("confounder refit leaves independent covariates unchanged") {
    std::mt19937_64 eng(7);
    auto profiles = synthetic_profiles(eng, 2000, 0.04, {1.0, 2.5, 4.0});
    auto specs = ms::builtin_microsystems();
    auto cmp = refit_with_confounder(profiles, {"PRF.IT"}, specs, 0.005);
    double without = cmp.without_confounder.entries[0].odds_ratio;
    double with = cmp.with_confounder.entries[0].odds_ratio;
    CHECK(std::fabs(with - without) < 1e-3);
    CHECK(cmp.moved.empty());
    CHECK(cmp.with_confounder.entries.size() > cmp.without_confounder.entries.size());
}

TEST_CASE("confounder refit with a single L1 level degenerates gracefully") {
    std::mt19937_64 eng(31);
    auto profiles = synthetic_profiles(eng, 400, 0.03, {0.8, 2.0, 3.4});
    for (auto& tp : profiles) tp.nationality = "FR";  // no dummies to add
    auto specs = ms::builtin_microsystems();
    auto cmp = refit_with_confounder(profiles, {"PRF.IT"}, specs);
    CHECK(cmp.with_confounder.entries.size() == cmp.without_confounder.entries.size());
    CHECK(cmp.moved.empty());
}

TEST_CASE("collinear covariates raise a singularity error naming the column") {
    std::mt19937_64 eng(12);
    auto profiles = synthetic_profiles(eng, 300, 0.02, {0.5, 1.5, 2.5});
    for (auto& tp : profiles) {
        // PRF.THIS column duplicates PRF.IT exactly
        tp.medians["PRF"][1] = tp.medians["PRF"][0];
    }
    auto specs = ms::builtin_microsystems();
    OrdinalData data = make_ordinal_data(profiles, {"PRF.IT", "PRF.THIS"}, specs, false);
    // the tiny default ridge regularizes the singular fit; with no ridge the
    // information matrix is flagged as collinear
    try {
        OrdinalModel m = fit_ordinal(data, 0.0, 1e-8, 200);
        auto report = odds_ratio_report(m);  // may throw instead
        (void)report;
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("PRF") != std::string::npos);
    } catch (const ConvergenceError&) {
        // equally acceptable: the unpenalized singular fit cannot converge
    }
}

TEST_CASE("kruskal-wallis matches the hand computation and handles ties") {
    auto r = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    CHECK(r.h == doctest::Approx(7.2).epsilon(1e-12));
    CHECK(r.df == 2);
    CHECK(r.p_value == doctest::Approx(0.02732372).epsilon(1e-4));

    auto identical = kruskal_wallis({{2, 2}, {2, 2}});
    CHECK(identical.h == doctest::Approx(0.0));
    CHECK(identical.p_value == doctest::Approx(1.0));

    CHECK_THROWS_AS(kruskal_wallis({{1.0}, {2.0}}), DataError);  // N < 3
    CHECK_THROWS_AS(kruskal_wallis({{1.0, 2.0}}), DataError);    // one group

    // rank invariance under a strictly monotone transform
    std::mt19937_64 eng(4);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> groups(3);
    for (auto& g : groups)
        for (int i = 0; i < 12; ++i) g.push_back(unif(eng));
    auto base = kruskal_wallis(groups);
    for (auto& g : groups)
        for (auto& v : g) v = std::exp(3.0 * v + 1.0);
    auto transformed = kruskal_wallis(groups);
    CHECK(base.h == doctest::Approx(transformed.h).epsilon(1e-12));
}

TEST_CASE("fleiss kappa: perfect agreement is exactly one") {
    // 165 items, 3 raters, unanimous rows over three categories
    std::vector<std::vector<int>> table;
    for (int i = 0; i < 165; ++i) {
        std::vector<int> row(3, 0);
        row[i % 3 == 0 ? 0 : (i % 3 == 1 ? 1 : 2)] = 3;
        table.push_back(row);
    }
    auto r = fleiss_kappa(table, 3);
    CHECK(r.kappa == 1.0);  // exact
    CHECK(r.z > 10.0);
    CHECK(r.p_value < 1e-6);
    CHECK(r.n_items == 165);
}

TEST_CASE("fleiss kappa: two-item full disagreement with equal margins") {
    std::vector<std::vector<int>> table = {{1, 1}, {1, 1}};
    auto r = fleiss_kappa(table, 2);
    CHECK(r.kappa == doctest::Approx(-1.0));
}

TEST_CASE("fleiss kappa is near zero on uniform random ratings") {
    std::mt19937_64 eng(123);
    std::vector<std::vector<int>> table;
    for (int i = 0; i < 10000; ++i) {
        std::vector<int> row(3, 0);
        for (int r = 0; r < 3; ++r) row[eng() % 3] += 1;
        table.push_back(row);
    }
    auto r = fleiss_kappa(table, 3);
    CHECK(std::fabs(r.kappa) < 0.05);

    std::vector<std::vector<int>> bad = {{1, 1, 1}};
    CHECK_THROWS_AS(fleiss_kappa(bad, 2), DataError);  // row sum mismatch
}

TEST_CASE("cohen kappa hand example and invariances") {
    auto r = cohen_kappa({"1", "1", "0", "0"}, {"1", "0", "0", "0"});
    CHECK(r.kappa == doctest::Approx(0.5).epsilon(1e-12));

    auto perfect = cohen_kappa({"a", "b", "c"}, {"a", "b", "c"});
    CHECK(perfect.kappa == doctest::Approx(1.0));

    // invariance under category relabeling
    auto relabeled = cohen_kappa({"x", "x", "y", "y"}, {"x", "y", "y", "y"});
    CHECK(relabeled.kappa == doctest::Approx(r.kappa));

    CHECK_THROWS_AS(cohen_kappa({"a"}, {"a", "b"}), DataError);
    CHECK_THROWS_AS(cohen_kappa({"a", "a"}, {"a", "a"}), DataError);  // p_e = 1
}

TEST_CASE("permutation test: identical samples give p near one") {
    RaterSample s;
    s.raters = {"r1", "r2"};
    std::mt19937_64 eng(5);
    for (int i = 0; i < 40; ++i) {
        std::string a = (eng() % 2) ? "x" : "y";
        std::string b = (eng() % 3) ? a : (a == "x" ? "y" : "x");
        s.items.push_back({a, b});
    }
    auto results = permutation_test_kappa(s, s, 400, 11);
    REQUIRE(results.size() == 1);
    CHECK(results[0].p_value == doctest::Approx(1.0));
    CHECK_FALSE(results[0].low_permutation_warning);

    auto warned = permutation_test_kappa(s, s, 50, 11);
    CHECK(warned[0].low_permutation_warning);
}

TEST_CASE("permutation test flags an engineered agreement gap") {
    std::mt19937_64 eng(9);
    RaterSample agree, disagree;
    agree.raters = disagree.raters = {"r1", "r2"};
    for (int i = 0; i < 60; ++i) {
        std::string label = (eng() % 2) ? "x" : "y";
        agree.items.push_back({label, label});  // perfect agreement
        std::string a = (eng() % 2) ? "x" : "y";
        std::string b = (eng() % 2) ? "x" : "y";
        disagree.items.push_back({a, b});  // random agreement
    }
    auto results = permutation_test_kappa(agree, disagree, 2000, 13);
    CHECK(results[0].p_value < 0.01);

    // p-values are stable across seeds within Monte-Carlo error
    auto again = permutation_test_kappa(agree, disagree, 2000, 14);
    CHECK(std::fabs(results[0].p_value - again[0].p_value) <= 2.0 / std::sqrt(2000.0));
}

TEST_CASE("pseudo r2 boundary behavior") {
    CHECK(pseudo_r2(-100.0, -100.0) == doctest::Approx(0.0));
    CHECK(pseudo_r2(0.0, -100.0) == doctest::Approx(1.0));
    CHECK(pseudo_r2(-20.0, -100.0) == doctest::Approx(0.8));
    CHECK_THROWS_AS(pseudo_r2(-1.0, 0.0), DataError);
    CHECK_THROWS_AS(pseudo_r2(-101.0, -100.0), DataError);
}

TEST_CASE("normalized form frequency per topic and level") {
    // one 100-token text with one REL THAT occurrence -> 10 per 1000
    std::ostringstream ss;
    ss << "# writing_id = w\n# cefr = A1\n# nationality = FR\n# topic_id = T2\n";
    for (int i = 1; i <= 100; ++i)
        ss << i << "\tw\tw\tNOUN\tNN\tNumber=Sing\t" << (i == 1 ? 0 : 1) << "\t"
           << (i == 1 ? "root" : "dep") << "\t_\t_\n";
    ss << "\n";
    std::istringstream in(ss.str());
    auto docs = parse_conllu(in);

    auto specs = ms::builtin_microsystems();
    const auto& rel = ms::find_microsystem(specs, "REL");
    ms::Occurrence o = make_occ("w", "REL", Cefr::A1);
    o.form = "THAT";
    o.topic = "T2";
    auto rows = normalized_form_frequency(docs, rel, {o});
    bool found_that = false;
    for (const auto& row : rows) {
        if (row.form == "THAT") {
            found_that = true;
            CHECK(row.topic == "T2");
            CHECK(row.count == 1);
            CHECK(row.group_tokens == 100);
            CHECK(row.freq_per_1000 == doctest::Approx(10.0));
            CHECK_FALSE(row.outlier);  // outliers are strictly above 10
        } else {
            CHECK(row.freq_per_1000 == doctest::Approx(0.0));
        }
    }
    CHECK(found_that);
}

TEST_CASE("documents without topics group under the unknown marker") {
    std::istringstream in(
        "# writing_id = w\n# cefr = A1\n"
        "1\tx\tx\tNOUN\tNN\t_\t0\troot\t_\t_\n\n");
    auto docs = parse_conllu(in);
    auto specs = ms::builtin_microsystems();
    auto rows = normalized_form_frequency(docs, ms::find_microsystem(specs, "QUANT2"), {});
    REQUIRE(!rows.empty());
    CHECK(rows[0].topic == "__UNKNOWN__");
}
