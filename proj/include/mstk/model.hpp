#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mstk/features.hpp"
#include "mstk/microsystems.hpp"

namespace mstk::model {

struct TrainConfig {
    double l2_penalty = 1e-4;
    double l1_penalty = 0.0;
    int max_iterations = 1000;
    double tolerance = 1e-6;  // on max |gradient|
    std::uint64_t seed = 0;
};

// Multinomial (softmax) logistic regression with the last class as the
// reference: eta_K = 0, Pr(Y=k|x) = exp(eta_k) / sum_j exp(eta_j).
struct MultinomialModel {
    std::string ms;                         // microsystem the model was fit for
    std::vector<std::string> class_labels;  // K labels; the last is the reference
    std::size_t n_features = 0;             // encoded columns, intercept included
    std::vector<double> beta;               // (K-1) x n_features, row-major
    std::vector<std::string> column_names;
    feat::LevelDictionary dict;

    std::size_t n_train = 0;
    std::uint64_t seed = 0;
    double l2_penalty = 0.0;
    double tolerance = 0.0;
    bool converged = false;
    bool separation_warning = false;
    bool underdetermined_warning = false;  // fewer rows than encoded columns
    int iterations = 0;
    std::vector<double> ll_trace;  // penalized log-likelihood per accepted step

    int k() const { return static_cast<int>(class_labels.size()); }
    double coef(int class_row, std::size_t j) const {
        return beta[static_cast<std::size_t>(class_row) * n_features + j];
    }

    std::string to_json() const;
    static MultinomialModel from_json(const std::string& text);
};

// Penalized log-likelihood (L2 on everything but the intercept column) and,
// when grad is non-null, its gradient. Exposed so tests can difference it.
double multinomial_loglik(const std::vector<double>& beta, const feat::DesignMatrix& x,
                          double l2_penalty, std::vector<double>* grad);

MultinomialModel train_multinomial(const feat::DesignMatrix& x, const TrainConfig& cfg,
                                   const std::vector<std::string>& class_labels);

// Numerically stable class probabilities for one encoded row.
std::vector<double> predict_row(const MultinomialModel& m, const double* row);

struct PredictedDistribution {
    const ms::Occurrence* occurrence = nullptr;
    std::vector<double> probabilities;  // length K, sums to 1
    int argmax_index = 1;               // 1-based
    std::string argmax_label;
    std::string ms;
    int gold_index = 0;
    std::string gold_label;
};

std::vector<PredictedDistribution> predict_proba(const MultinomialModel& m,
                                                 const feat::DesignMatrix& x,
                                                 const std::vector<ms::Occurrence>* occs);

struct ClassMetrics {
    std::string label;
    double balanced_accuracy = 0.0;
    double recall = 0.0;      // sensitivity
    double precision = 0.0;
    double specificity = 0.0;
    std::size_t support = 0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double ci_low = 0.0;   // Wilson 95%
    double ci_high = 0.0;
    std::vector<ClassMetrics> per_class;
    num::Matrix confusion;  // gold rows x predicted columns
    std::size_t n = 0;
};

ClassificationReport classification_report(const std::vector<int>& predicted,
                                           const std::vector<int>& gold,
                                           const std::vector<std::string>& labels);

// Wilson score interval for a binomial proportion at 95%.
std::pair<double, double> wilson_interval(double p_hat, std::size_t n);

struct ImportanceEntry {
    std::string feature;
    double percent = 0.0;
};

// Share of the model each encoded column is responsible for:
// sum_k |beta_kj| over non-reference classes, scaled to a 100% total.
// The intercept column is not ranked.
std::vector<ImportanceEntry> feature_importance(const MultinomialModel& m);

// Index-level split/subsample primitives (deterministic under seed).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed);
std::vector<std::size_t> balanced_subsample_indices(const std::vector<int>& labels,
                                                    std::uint64_t seed);

std::pair<std::vector<ms::Occurrence>, std::vector<ms::Occurrence>> stratified_split(
    const std::vector<ms::Occurrence>& occurrences, double test_fraction,
    std::uint64_t seed);
std::vector<ms::Occurrence> balanced_subsample(const std::vector<ms::Occurrence>& train,
                                               std::uint64_t seed);

// L1-penalized multinomial regression fit by proximal gradient with the
// penalty weight chosen by k-fold held-out deviance.
struct LassoResult {
    std::vector<std::string> class_labels;
    std::vector<double> beta;  // (K-1) x p
    std::size_t p = 0;
    double chosen_penalty = 0.0;
    double pseudo_r2 = 0.0;          // McFadden, final fit vs intercept-only
    double loglik = 0.0;
    double loglik_null = 0.0;
    std::vector<std::pair<double, double>> cv_deviance;  // penalty -> mean deviance
    std::size_t nonzero_coefficients = 0;

    int k() const { return static_cast<int>(class_labels.size()); }
};

LassoResult train_lasso_multinomial(const feat::DesignMatrix& x,
                                    const std::vector<std::string>& class_labels,
                                    std::vector<double> penalty_grid = {},
                                    int folds = 5, std::uint64_t seed = 0);

// Single-penalty fit used by the CV loop and tests.
std::vector<double> lasso_fit_at(const feat::DesignMatrix& x, int k, double penalty,
                                 int max_iterations = 2000, double tol = 1e-7);

}  // namespace mstk::model
