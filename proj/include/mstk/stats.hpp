#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mstk/corpus.hpp"
#include "mstk/model.hpp"

namespace mstk::stats {

// Per-text aggregation of predicted form probabilities: the median of each
// form's probability across the text's occurrences, in percent.
struct TextProfile {
    std::string writing_id;
    Cefr cefr = Cefr::A1;
    std::string nationality;
    std::string topic;
    std::map<std::string, std::vector<double>> medians;  // ms -> per-form percent
    std::map<std::string, std::size_t> counts;           // ms -> occurrences in text

    bool has(const std::string& ms_name) const { return medians.count(ms_name) > 0; }
};

std::vector<TextProfile> aggregate_text_median(
    const std::vector<model::PredictedDistribution>& predictions);

// ------------------------------------------------------------ ordinal model

struct OrdinalData {
    std::vector<std::vector<double>> rows;  // covariates (percent units)
    std::vector<int> y;                     // 1..J against `levels`
    std::vector<std::string> covariate_names;
    std::vector<std::string> levels;  // outcome level labels, ascending
    std::size_t n_dropped = 0;        // rows lost to missing covariates
};

// Builds an ordinal dataset from text profiles. Covariates are "MS.FORM"
// median columns; texts missing any requested microsystem are dropped and
// counted. With include_l1, one-hot nationality dummies (reference level
// dropped) are appended.
OrdinalData make_ordinal_data(const std::vector<TextProfile>& profiles,
                              const std::vector<std::string>& covariates,
                              const std::vector<ms::MicrosystemSpec>& specs,
                              bool include_l1 = false);

// Proportional-odds logistic regression: P(Y <= j | x) = sigmoid(alpha_j - x.beta),
// so beta > 0 means a higher covariate favors a higher outcome level and
// exp(beta) is the odds ratio of a better level per unit increase.
struct OrdinalModel {
    std::vector<std::string> levels;      // J observed outcome labels
    std::vector<double> thresholds;       // J-1, strictly increasing
    std::vector<double> slopes;           // per covariate
    std::vector<double> slope_se;         // observed-information standard errors
    std::vector<std::string> covariate_names;
    double loglik = 0.0;
    double loglik_null = 0.0;  // thresholds-only model
    bool converged = false;
    int iterations = 0;
    std::size_t n_used = 0;
    std::size_t n_dropped = 0;

    double pseudo_r2() const;  // McFadden
};

// Penalized log-likelihood of the proportional-odds model at the packed
// parameter vector [thresholds..., slopes...]; fills the gradient when
// grad is non-null. Exposed for finite-difference verification.
double ordinal_loglik(const std::vector<double>& params, const OrdinalData& data,
                      double ridge, std::vector<double>* grad);

// Newton fit with step halving; tiny ridge (default 1e-8) on the slopes
// keeps the information matrix invertible. Throws ConvergenceError when the
// gradient tolerance is not reached.
OrdinalModel fit_ordinal(const OrdinalData& data, double ridge = 1e-8,
                         double tolerance = 1e-8, int max_iterations = 200);

struct OddsRatioEntry {
    std::string covariate;
    double odds_ratio = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double p_value = 1.0;
    bool significant = false;  // p < .05
};

struct OddsRatioReport {
    std::vector<OddsRatioEntry> entries;
};

OddsRatioReport odds_ratio_report(const OrdinalModel& m);

struct ConfounderComparison {
    OddsRatioReport without_confounder;
    OddsRatioReport with_confounder;  // covariate rows first, dummies after
    std::vector<std::string> moved;   // covariates whose OR moved more than delta
    std::size_t n_dropped_without = 0;
    std::size_t n_dropped_with = 0;
};

// Refits the ordinal model with one-hot L1/nationality dummies added and
// reports both odds-ratio tables side by side.
ConfounderComparison refit_with_confounder(const std::vector<TextProfile>& profiles,
                                           const std::vector<std::string>& covariates,
                                           const std::vector<ms::MicrosystemSpec>& specs,
                                           double delta = 0.005);

// ---------------------------------------------------------------- rank test

struct KruskalWallisResult {
    double h = 0.0;
    int df = 0;
    double p_value = 1.0;
};

// Midrank tie correction; chi-square approximation for the p-value.
KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// ---------------------------------------------------------------- agreement

struct AgreementResult {
    double kappa = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    std::size_t n_items = 0;
    std::size_t n_raters = 0;
    std::size_t n_categories = 0;
};

// Fleiss' kappa over an items x categories count table; every row must sum
// to the rater count. z uses the classical large-sample null variance.
AgreementResult fleiss_kappa(const std::vector<std::vector<int>>& table, int n_raters);

AgreementResult cohen_kappa(const std::vector<std::string>& ratings_a,
                            const std::vector<std::string>& ratings_b);

// One annotation sample: items rated by the same raters.
struct RaterSample {
    std::vector<std::string> raters;
    std::vector<std::vector<std::string>> items;  // item -> one label per rater
};

struct PairPermutationResult {
    std::string rater_a;
    std::string rater_b;
    double kappa_sample1 = 0.0;
    double kappa_sample2 = 0.0;
    double p_value = 1.0;
    bool low_permutation_warning = false;
};

// Two-sided permutation test of the pairwise kappa difference between two
// samples, shuffling items between samples. Deterministic per seed.
std::vector<PairPermutationResult> permutation_test_kappa(const RaterSample& sample1,
                                                          const RaterSample& sample2,
                                                          int n_perm = 10000,
                                                          std::uint64_t seed = 0);

// McFadden pseudo R-squared, clamped to [0, 1].
double pseudo_r2(double ll_model, double ll_null);

// ------------------------------------------------------------- frequencies

struct FormFrequencyRow {
    std::string topic;  // "__UNKNOWN__" when the document has no topic
    Cefr cefr = Cefr::A1;
    std::string form;
    std::size_t count = 0;
    std::size_t group_tokens = 0;
    double freq_per_1000 = 0.0;
    bool outlier = false;  // freq > 10
};

// Form counts per (topic x CEFR) group, normalized per 1000 tokens of the
// group. Every form of the microsystem is reported for every group that
// has documents.
std::vector<FormFrequencyRow> normalized_form_frequency(
    const std::vector<Document>& docs, const ms::MicrosystemSpec& spec,
    const std::vector<ms::Occurrence>& occurrences);

}  // namespace mstk::stats
