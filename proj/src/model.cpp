#include "mstk/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace mstk::model {

namespace {

constexpr double kZ95 = 1.959963984540054;

// Class probabilities for one row under coefficient block (k-1) x p.
void row_probs(const double* beta, int k, std::size_t p, const double* row,
               std::vector<double>& eta, std::vector<double>& pi) {
    eta.assign(k, 0.0);
    for (int c = 0; c < k - 1; ++c) {
        double v = 0.0;
        const double* b = beta + static_cast<std::size_t>(c) * p;
        for (std::size_t j = 0; j < p; ++j) v += b[j] * row[j];
        eta[c] = v;
    }
    double lse = num::log_sum_exp(eta);
    pi.assign(k, 0.0);
    for (int c = 0; c < k; ++c) pi[c] = std::exp(eta[c] - lse);
}

// linear predictors for one design-matrix row, skipping stored zeros
void row_etas(const double* beta, int k, const feat::DesignMatrix& x, std::size_t i,
              std::vector<double>& eta) {
    const std::size_t p = x.p;
    eta.assign(k, 0.0);
    const double* row = &x.x[i * p];
    if (x.has_sparsity()) {
        for (std::size_t t = x.nz_start[i]; t < x.nz_start[i + 1]; ++t) {
            std::size_t j = x.nz_cols[t];
            double v = row[j];
            for (int c = 0; c < k - 1; ++c)
                eta[static_cast<std::size_t>(c)] +=
                    beta[static_cast<std::size_t>(c) * p + j] * v;
        }
    } else {
        for (int c = 0; c < k - 1; ++c) {
            double v = 0.0;
            const double* b = beta + static_cast<std::size_t>(c) * p;
            for (std::size_t j = 0; j < p; ++j) v += b[j] * row[j];
            eta[static_cast<std::size_t>(c)] = v;
        }
    }
}

void etas_to_probs(std::vector<double>& eta, std::vector<double>& pi) {
    double lse = num::log_sum_exp(eta);
    pi.resize(eta.size());
    for (std::size_t c = 0; c < eta.size(); ++c) pi[c] = std::exp(eta[c] - lse);
}

feat::DesignMatrix subset_rows(const feat::DesignMatrix& x,
                               const std::vector<std::size_t>& rows) {
    feat::DesignMatrix out;
    out.n = rows.size();
    out.p = x.p;
    out.column_names = x.column_names;
    out.dict = x.dict;
    out.x.resize(out.n * out.p);
    out.y.resize(out.n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(x.x.begin() + rows[i] * x.p, x.x.begin() + (rows[i] + 1) * x.p,
                  out.x.begin() + i * out.p);
        out.y[i] = x.y[rows[i]];
    }
    if (x.has_sparsity()) out.build_sparsity();
    return out;
}

double unpenalized_loglik(const std::vector<double>& beta, const feat::DesignMatrix& x,
                          int k) {
    std::vector<double> eta, pi;
    double ll = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
        eta.assign(k, 0.0);
        row_etas(beta.data(), k, x, i, eta);
        etas_to_probs(eta, pi);
        ll += std::log(std::max(pi[x.y[i] - 1], 1e-300));
    }
    return ll;
}

}  // namespace

double multinomial_loglik(const std::vector<double>& beta, const feat::DesignMatrix& x,
                          double l2_penalty, std::vector<double>* grad) {
    const int label_max = x.y.empty() ? 0 : *std::max_element(x.y.begin(), x.y.end());
    const std::size_t p = x.p;
    const int k = static_cast<int>(beta.size() / p) + 1;
    if (label_max > k) throw DataError("label outside the class range");
    const std::size_t intercept = x.intercept_column();

    if (grad) grad->assign(beta.size(), 0.0);
    std::vector<double> eta, pi;
    eta.reserve(k);
    pi.reserve(k);
    double ll = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
        const double* row = &x.x[i * p];
        eta.assign(k, 0.0);
        row_etas(beta.data(), k, x, i, eta);
        etas_to_probs(eta, pi);
        ll += std::log(std::max(pi[x.y[i] - 1], 1e-300));
        if (grad) {
            if (x.has_sparsity()) {
                for (int c = 0; c < k - 1; ++c) {
                    double r = (x.y[i] == c + 1 ? 1.0 : 0.0) - pi[c];
                    double* g = grad->data() + static_cast<std::size_t>(c) * p;
                    for (std::size_t t = x.nz_start[i]; t < x.nz_start[i + 1]; ++t) {
                        std::size_t j = x.nz_cols[t];
                        g[j] += r * row[j];
                    }
                }
            } else {
                for (int c = 0; c < k - 1; ++c) {
                    double r = (x.y[i] == c + 1 ? 1.0 : 0.0) - pi[c];
                    double* g = grad->data() + static_cast<std::size_t>(c) * p;
                    for (std::size_t j = 0; j < p; ++j) g[j] += r * row[j];
                }
            }
        }
    }
    // ridge on everything but the intercept
    double penalty = 0.0;
    for (int c = 0; c < k - 1; ++c) {
        for (std::size_t j = 0; j < p; ++j) {
            if (j == intercept) continue;
            double b = beta[static_cast<std::size_t>(c) * p + j];
            penalty += b * b;
            if (grad) (*grad)[static_cast<std::size_t>(c) * p + j] -= l2_penalty * b;
        }
    }
    return ll - 0.5 * l2_penalty * penalty;
}

MultinomialModel train_multinomial(const feat::DesignMatrix& x, const TrainConfig& cfg,
                                   const std::vector<std::string>& class_labels) {
    const int k = static_cast<int>(class_labels.size());
    if (k < 2) throw DataError("train_multinomial: need at least 2 classes");
    if (x.n == 0) throw DataError("train_multinomial: empty design matrix");
    {
        std::vector<bool> seen(k, false);
        for (int label : x.y) {
            if (label < 1 || label > k) throw DataError("label outside the class range");
            seen[label - 1] = true;
        }
        int distinct = static_cast<int>(std::count(seen.begin(), seen.end(), true));
        if (distinct < 2) throw DataError("train_multinomial: labels span one class");
    }

    const std::size_t dim = static_cast<std::size_t>(k - 1) * x.p;
    std::vector<double> beta(dim, 0.0);  // deterministic zero start

    MultinomialModel m;
    m.class_labels = class_labels;
    m.n_features = x.p;
    m.column_names = x.column_names;
    m.dict = x.dict;
    m.n_train = x.n;
    m.seed = cfg.seed;
    m.l2_penalty = cfg.l2_penalty;
    m.tolerance = cfg.tolerance;
    m.underdetermined_warning = x.n <= x.p;

    // Quasi-Newton ascent: L-BFGS with Armijo backtracking for the bulk of
    // the climb, then exact Newton steps to push the gradient to tolerance
    // (the ridge-dominated directions are too ill-conditioned for a small
    // L-BFGS memory). The line search keeps the penalized log-likelihood
    // non-decreasing step to step.
    const int memory = 10;
    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho_hist;

    std::vector<double> grad;
    double ll = multinomial_loglik(beta, x, cfg.l2_penalty, &grad);
    m.ll_trace.push_back(ll);

    auto max_abs = [](const std::vector<double>& v) {
        double mx = 0.0;
        for (double t : v) mx = std::max(mx, std::fabs(t));
        return mx;
    };

    const std::size_t intercept = x.intercept_column();
    // Newton direction from the exact penalized Hessian; empty when the
    // problem is too large or the solve fails.
    auto newton_direction = [&](const std::vector<double>& at,
                                const std::vector<double>& g) -> std::vector<double> {
        if (dim > 2000) return {};
        num::Matrix neg_h(dim, dim, 0.0);
        std::vector<double> eta, pi;
        std::vector<std::uint32_t> dense_cols;
        for (std::size_t j = 0; j < x.p; ++j)
            dense_cols.push_back(static_cast<std::uint32_t>(j));
        for (std::size_t i = 0; i < x.n; ++i) {
            const double* row = &x.x[i * x.p];
            eta.assign(k, 0.0);
            row_etas(at.data(), k, x, i, eta);
            etas_to_probs(eta, pi);
            const std::uint32_t* cols =
                x.has_sparsity() ? &x.nz_cols[x.nz_start[i]] : dense_cols.data();
            std::size_t n_cols =
                x.has_sparsity() ? x.nz_start[i + 1] - x.nz_start[i] : x.p;
            for (int a = 0; a < k - 1; ++a) {
                for (int b = a; b < k - 1; ++b) {
                    double w = pi[a] * ((a == b ? 1.0 : 0.0) - pi[b]);
                    if (w == 0.0) continue;
                    for (std::size_t ri = 0; ri < n_cols; ++ri) {
                        std::size_t r = cols[ri];
                        if (row[r] == 0.0) continue;
                        double wr = w * row[r];
                        std::size_t ra = static_cast<std::size_t>(a) * x.p + r;
                        std::size_t rb = static_cast<std::size_t>(b) * x.p;
                        for (std::size_t ci = 0; ci < n_cols; ++ci) {
                            std::size_t c = cols[ci];
                            neg_h(ra, rb + c) += wr * row[c];
                        }
                    }
                }
            }
        }
        // mirror the upper block triangle
        for (int a = 0; a < k - 1; ++a)
            for (int b = a + 1; b < k - 1; ++b)
                for (std::size_t r = 0; r < x.p; ++r)
                    for (std::size_t c = 0; c < x.p; ++c)
                        neg_h(static_cast<std::size_t>(b) * x.p + r,
                              static_cast<std::size_t>(a) * x.p + c) =
                            neg_h(static_cast<std::size_t>(a) * x.p + r,
                                  static_cast<std::size_t>(b) * x.p + c);
        for (int a = 0; a < k - 1; ++a)
            for (std::size_t r = 0; r < x.p; ++r) {
                std::size_t j = static_cast<std::size_t>(a) * x.p + r;
                neg_h(j, j) += (r == intercept) ? 1e-10 : cfg.l2_penalty;
            }
        try {
            return num::cholesky_solve(std::move(neg_h), g);
        } catch (const DataError&) {
            return {};
        }
    };

    int iter = 0;
    bool use_newton = false;
    for (; iter < cfg.max_iterations; ++iter) {
        double gmax = max_abs(grad);
        if (gmax <= cfg.tolerance) {
            m.converged = true;
            break;
        }

        std::vector<double> d;
        double dg = 0.0;
        if (use_newton) d = newton_direction(beta, grad);
        if (d.empty()) {
            // two-loop recursion on the ascent direction
            d = grad;
            std::vector<double> alpha(s_hist.size());
            for (std::size_t h = s_hist.size(); h-- > 0;) {
                double a = rho_hist[h] * std::inner_product(s_hist[h].begin(),
                                                            s_hist[h].end(), d.begin(), 0.0);
                alpha[h] = a;
                for (std::size_t j = 0; j < dim; ++j) d[j] -= a * y_hist[h][j];
            }
            if (!s_hist.empty()) {
                const auto& s = s_hist.back();
                const auto& yv = y_hist.back();
                double sy = std::inner_product(s.begin(), s.end(), yv.begin(), 0.0);
                double yy = std::inner_product(yv.begin(), yv.end(), yv.begin(), 0.0);
                if (yy > 0) {
                    double scale = sy / yy;
                    for (double& t : d) t *= scale;
                }
            }
            for (std::size_t h = 0; h < s_hist.size(); ++h) {
                double b = rho_hist[h] * std::inner_product(y_hist[h].begin(),
                                                            y_hist[h].end(), d.begin(), 0.0);
                for (std::size_t j = 0; j < dim; ++j) d[j] += (alpha[h] - b) * s_hist[h][j];
            }
        }
        dg = std::inner_product(d.begin(), d.end(), grad.begin(), 0.0);
        if (dg <= 0) {  // not an ascent direction; fall back to the gradient
            d = grad;
            dg = std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0);
        }

        double step = 1.0;
        std::vector<double> beta_new(dim), grad_new;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t j = 0; j < dim; ++j) beta_new[j] = beta[j] + step * d[j];
            double ll_new = multinomial_loglik(beta_new, x, cfg.l2_penalty, &grad_new);
            // accept on sufficient ascent, or, once the likelihood gain
            // saturates double precision, on a clear gradient reduction
            if (ll_new >= ll + 1e-4 * step * dg ||
                (ll_new >= ll - 1e-9 * (1.0 + std::fabs(ll)) &&
                 max_abs(grad_new) < 0.5 * gmax)) {
                accepted = true;
                ll = std::max(ll, ll_new);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!use_newton) {
                use_newton = true;  // retry the step with exact curvature
                continue;
            }
            break;  // no ascent possible at machine precision
        }

        std::vector<double> s(dim), yv(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            s[j] = beta_new[j] - beta[j];
            yv[j] = -(grad_new[j] - grad[j]);  // curvature pair of the negated objective
        }
        double sy = std::inner_product(s.begin(), s.end(), yv.begin(), 0.0);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        beta.swap(beta_new);
        grad.swap(grad_new);
        m.ll_trace.push_back(ll);
        // switch to Newton polishing once the easy progress is made
        if (!use_newton && (max_abs(grad) <= 1e-3 * (1.0 + std::fabs(ll)) || iter >= 150))
            use_newton = true;
    }
    m.iterations = iter;
    if (!m.converged && max_abs(grad) <= cfg.tolerance) m.converged = true;

    for (double b : beta)
        if (std::fabs(b) > 30.0) m.separation_warning = true;

    m.beta = std::move(beta);
    return m;
}

std::vector<double> predict_row(const MultinomialModel& m, const double* row) {
    std::vector<double> eta, pi;
    row_probs(m.beta.data(), m.k(), m.n_features, row, eta, pi);
    return pi;
}

std::vector<PredictedDistribution> predict_proba(const MultinomialModel& m,
                                                 const feat::DesignMatrix& x,
                                                 const std::vector<ms::Occurrence>* occs) {
    if (x.p != m.n_features)
        throw DataError("predict_proba: design matrix has " + std::to_string(x.p) +
                        " columns, model expects " + std::to_string(m.n_features));
    if (occs && occs->size() != x.n)
        throw DataError("predict_proba: occurrence list does not match rows");
    std::vector<PredictedDistribution> out;
    out.reserve(x.n);
    for (std::size_t i = 0; i < x.n; ++i) {
        PredictedDistribution pd;
        pd.probabilities = predict_row(m, &x.x[i * x.p]);
        pd.argmax_index = 1 + static_cast<int>(std::max_element(pd.probabilities.begin(),
                                                                pd.probabilities.end()) -
                                               pd.probabilities.begin());
        pd.argmax_label = m.class_labels[pd.argmax_index - 1];
        if (occs) {
            pd.occurrence = &(*occs)[i];
            pd.ms = pd.occurrence->ms;
            pd.gold_index = pd.occurrence->form_index;
            pd.gold_label = pd.occurrence->form;
        } else if (!x.y.empty()) {
            pd.gold_index = x.y[i];
            pd.gold_label = m.class_labels[x.y[i] - 1];
        }
        out.push_back(std::move(pd));
    }
    return out;
}

std::pair<double, double> wilson_interval(double p_hat, std::size_t n) {
    if (n == 0) return {0.0, 1.0};
    double z = kZ95;
    double nn = static_cast<double>(n);
    double denom = 1.0 + z * z / nn;
    double center = (p_hat + z * z / (2.0 * nn)) / denom;
    double half = z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z * z / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

ClassificationReport classification_report(const std::vector<int>& predicted,
                                           const std::vector<int>& gold,
                                           const std::vector<std::string>& labels) {
    if (predicted.size() != gold.size())
        throw DataError("classification_report: prediction/gold length mismatch");
    if (predicted.empty()) throw DataError("classification_report: empty input");
    const int k = static_cast<int>(labels.size());

    ClassificationReport rep;
    rep.n = gold.size();
    rep.confusion = num::Matrix(k, k, 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 1 || gold[i] > k || predicted[i] < 1 || predicted[i] > k)
            throw DataError("classification_report: label outside range");
        rep.confusion(gold[i] - 1, predicted[i] - 1) += 1.0;
        if (gold[i] == predicted[i]) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.n);
    std::tie(rep.ci_low, rep.ci_high) = wilson_interval(rep.accuracy, rep.n);

    for (int c = 0; c < k; ++c) {
        ClassMetrics cm;
        cm.label = labels[c];
        double tp = rep.confusion(c, c);
        double fn = 0.0, fp = 0.0;
        for (int j = 0; j < k; ++j) {
            if (j != c) {
                fn += rep.confusion(c, j);
                fp += rep.confusion(j, c);
            }
        }
        double tn = static_cast<double>(rep.n) - tp - fn - fp;
        cm.support = static_cast<std::size_t>(tp + fn);
        cm.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
        cm.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
        cm.specificity = (tn + fp) > 0 ? tn / (tn + fp) : 0.0;
        cm.balanced_accuracy = 0.5 * (cm.recall + cm.specificity);
        rep.per_class.push_back(std::move(cm));
    }
    return rep;
}

std::vector<ImportanceEntry> feature_importance(const MultinomialModel& m) {
    std::vector<ImportanceEntry> entries;
    double total = 0.0;
    for (std::size_t j = 0; j < m.n_features; ++j) {
        if (j < m.column_names.size() && m.column_names[j] == feat::kIntercept) continue;
        double v = 0.0;
        for (int c = 0; c < m.k() - 1; ++c) v += std::fabs(m.coef(c, j));
        entries.push_back({j < m.column_names.size() ? m.column_names[j]
                                                     : "col" + std::to_string(j),
                           v});
        total += v;
    }
    if (total > 0)
        for (auto& e : entries) e.percent = 100.0 * e.percent / total;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ImportanceEntry& a, const ImportanceEntry& b) {
                         return a.percent > b.percent;
                     });
    return entries;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<std::size_t> train, test;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw DataError("stratified_split: class " + std::to_string(label) +
                            " has fewer than 2 items");
        auto engine = rng::make_engine(seed, "split:" + std::to_string(label));
        std::shuffle(idx.begin(), idx.end(), engine);
        std::size_t n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        if (n_test >= idx.size()) n_test = idx.size() - 1;
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_test ? test : train).push_back(idx[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::vector<std::size_t> balanced_subsample_indices(const std::vector<int>& labels,
                                                    std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    if (by_class.empty()) throw DataError("balanced_subsample: no data");
    std::size_t minimum = SIZE_MAX;
    for (const auto& [label, idx] : by_class) minimum = std::min(minimum, idx.size());

    std::vector<std::size_t> keep;
    for (auto& [label, idx] : by_class) {
        auto engine = rng::make_engine(seed, "subsample:" + std::to_string(label));
        std::shuffle(idx.begin(), idx.end(), engine);
        keep.insert(keep.end(), idx.begin(), idx.begin() + minimum);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::pair<std::vector<ms::Occurrence>, std::vector<ms::Occurrence>> stratified_split(
    const std::vector<ms::Occurrence>& occurrences, double test_fraction,
    std::uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(occurrences.size());
    for (const auto& o : occurrences) labels.push_back(o.form_index);
    auto [train_idx, test_idx] = stratified_split_indices(labels, test_fraction, seed);
    std::pair<std::vector<ms::Occurrence>, std::vector<ms::Occurrence>> out;
    for (auto i : train_idx) out.first.push_back(occurrences[i]);
    for (auto i : test_idx) out.second.push_back(occurrences[i]);
    return out;
}

std::vector<ms::Occurrence> balanced_subsample(const std::vector<ms::Occurrence>& train,
                                               std::uint64_t seed) {
    std::vector<int> labels;
    labels.reserve(train.size());
    for (const auto& o : train) labels.push_back(o.form_index);
    std::vector<ms::Occurrence> out;
    for (auto i : balanced_subsample_indices(labels, seed)) out.push_back(train[i]);
    return out;
}

// ------------------------------------------------------------------ LASSO

namespace {

// mean negative log-likelihood of the multinomial fit (smooth part)
double lasso_smooth(const std::vector<double>& beta, const feat::DesignMatrix& x, int k,
                    std::vector<double>* grad) {
    if (grad) grad->assign(beta.size(), 0.0);
    std::vector<double> eta, pi;
    double nll = 0.0;
    const double inv_n = 1.0 / static_cast<double>(x.n);
    for (std::size_t i = 0; i < x.n; ++i) {
        const double* row = &x.x[i * x.p];
        eta.assign(k, 0.0);
        row_etas(beta.data(), k, x, i, eta);
        etas_to_probs(eta, pi);
        nll -= std::log(std::max(pi[x.y[i] - 1], 1e-300));
        if (grad) {
            for (int c = 0; c < k - 1; ++c) {
                double r = pi[c] - (x.y[i] == c + 1 ? 1.0 : 0.0);
                double* g = grad->data() + static_cast<std::size_t>(c) * x.p;
                for (std::size_t j = 0; j < x.p; ++j) g[j] += inv_n * r * row[j];
            }
        }
    }
    return nll * inv_n;
}

}  // namespace

std::vector<double> lasso_fit_at(const feat::DesignMatrix& x, int k, double penalty,
                                 int max_iterations, double tol) {
    const std::size_t dim = static_cast<std::size_t>(k - 1) * x.p;
    const std::size_t intercept = x.intercept_column();
    std::vector<double> beta(dim, 0.0);

    auto soft = [](double v, double t) {
        if (v > t) return v - t;
        if (v < -t) return v + t;
        return 0.0;
    };

    std::vector<double> grad;
    double f = lasso_smooth(beta, x, k, &grad);
    double step = 1.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
        // proximal gradient with backtracking on the smooth majorizer
        std::vector<double> beta_new(dim);
        double f_new = 0.0;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t c = 0; c < static_cast<std::size_t>(k - 1); ++c) {
                for (std::size_t j = 0; j < x.p; ++j) {
                    std::size_t idx = c * x.p + j;
                    double v = beta[idx] - step * grad[idx];
                    beta_new[idx] = (j == intercept) ? v : soft(v, step * penalty);
                }
            }
            f_new = lasso_smooth(beta_new, x, k, nullptr);
            double q = f;
            double dist2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                double d = beta_new[j] - beta[j];
                q += grad[j] * d;
                dist2 += d * d;
            }
            q += dist2 / (2.0 * step);
            if (f_new <= q + 1e-12) break;
            step *= 0.5;
        }
        double change = 0.0;
        for (std::size_t j = 0; j < dim; ++j)
            change = std::max(change, std::fabs(beta_new[j] - beta[j]));
        beta.swap(beta_new);
        f = lasso_smooth(beta, x, k, &grad);
        if (change < tol) break;
        step = std::min(step * 2.0, 1.0);  // tentative step recovery
    }
    return beta;
}

LassoResult train_lasso_multinomial(const feat::DesignMatrix& x,
                                    const std::vector<std::string>& class_labels,
                                    std::vector<double> penalty_grid, int folds,
                                    std::uint64_t seed) {
    const int k = static_cast<int>(class_labels.size());
    if (k < 2) throw DataError("train_lasso_multinomial: need at least 2 outcome levels");
    {
        std::vector<bool> seen(k, false);
        for (int label : x.y) seen.at(label - 1) = true;
        if (std::count(seen.begin(), seen.end(), true) < 2)
            throw DataError("train_lasso_multinomial: outcome has a single level");
    }
    const std::size_t intercept = x.intercept_column();

    // class frequencies give the null fit and the penalty ceiling
    std::vector<double> freq(k, 0.0);
    for (int label : x.y) freq[label - 1] += 1.0;
    for (double& f : freq) f /= static_cast<double>(x.n);

    double lambda_max = 0.0;
    for (int c = 0; c < k - 1; ++c) {
        for (std::size_t j = 0; j < x.p; ++j) {
            if (j == intercept) continue;
            double g = 0.0;
            for (std::size_t i = 0; i < x.n; ++i)
                g += x.at(i, j) * ((x.y[i] == c + 1 ? 1.0 : 0.0) - freq[c]);
            lambda_max = std::max(lambda_max, std::fabs(g) / static_cast<double>(x.n));
        }
    }
    if (lambda_max <= 0) lambda_max = 1e-3;

    if (penalty_grid.empty()) {
        const int n_grid = 16;
        for (int g = 0; g < n_grid; ++g)
            penalty_grid.push_back(lambda_max *
                                   std::pow(10.0, -3.0 * g / (n_grid - 1.0)));
        std::reverse(penalty_grid.begin(), penalty_grid.end());  // ascending
    }
    std::sort(penalty_grid.begin(), penalty_grid.end());

    // k-fold assignment, shuffled once
    std::vector<std::size_t> order(x.n);
    std::iota(order.begin(), order.end(), 0);
    auto engine = rng::make_engine(seed, "lasso-cv");
    std::shuffle(order.begin(), order.end(), engine);
    folds = std::max(2, std::min<int>(folds, static_cast<int>(x.n)));
    std::vector<int> fold_of(x.n);
    for (std::size_t i = 0; i < x.n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);

    LassoResult result;
    result.class_labels = class_labels;
    result.p = x.p;

    double best_dev = std::numeric_limits<double>::infinity();
    double best_penalty = penalty_grid.back();
    for (double penalty : penalty_grid) {
        double dev_sum = 0.0;
        int dev_cnt = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> train_rows, test_rows;
            for (std::size_t i = 0; i < x.n; ++i)
                (fold_of[i] == f ? test_rows : train_rows).push_back(i);
            if (train_rows.empty() || test_rows.empty()) continue;
            feat::DesignMatrix xt = subset_rows(x, train_rows);
            feat::DesignMatrix xv = subset_rows(x, test_rows);
            // held-out folds can miss a class; skip such splits
            std::vector<bool> seen(k, false);
            for (int label : xt.y) seen[label - 1] = true;
            if (std::count(seen.begin(), seen.end(), true) < 2) continue;
            std::vector<double> beta = lasso_fit_at(xt, k, penalty, 600, 1e-6);
            double dev = -2.0 * unpenalized_loglik(beta, xv, k) /
                         static_cast<double>(xv.n);
            dev_sum += dev;
            ++dev_cnt;
        }
        double mean_dev = dev_cnt ? dev_sum / dev_cnt : std::numeric_limits<double>::infinity();
        result.cv_deviance.emplace_back(penalty, mean_dev);
        // prefer the sparser fit on ties
        if (mean_dev < best_dev - 1e-10) {
            best_dev = mean_dev;
            best_penalty = penalty;
        }
    }

    result.chosen_penalty = best_penalty;
    result.beta = lasso_fit_at(x, k, best_penalty, 4000, 1e-8);
    result.loglik = unpenalized_loglik(result.beta, x, k);
    result.loglik_null = 0.0;
    for (int c = 0; c < k; ++c)
        if (freq[c] > 0)
            result.loglik_null +=
                freq[c] * static_cast<double>(x.n) * std::log(freq[c]);
    result.pseudo_r2 =
        result.loglik_null < 0
            ? std::clamp(1.0 - result.loglik / result.loglik_null, 0.0, 1.0)
            : 0.0;
    for (int c = 0; c < k - 1; ++c)
        for (std::size_t j = 0; j < x.p; ++j)
            if (j != intercept &&
                std::fabs(result.beta[static_cast<std::size_t>(c) * x.p + j]) > 1e-8)
                ++result.nonzero_coefficients;
    return result;
}

// -------------------------------------------------------------- serialization

std::string MultinomialModel::to_json() const {
    nlohmann::json j;
    j["ms"] = ms;
    j["class_labels"] = class_labels;
    j["n_features"] = n_features;
    j["beta"] = beta;
    j["column_names"] = column_names;
    j["dict"] = nlohmann::json::parse(dict.to_json());
    j["n_train"] = n_train;
    j["seed"] = seed;
    j["l2_penalty"] = l2_penalty;
    j["tolerance"] = tolerance;
    j["converged"] = converged;
    j["separation_warning"] = separation_warning;
    j["underdetermined_warning"] = underdetermined_warning;
    j["iterations"] = iterations;
    return j.dump(2);
}

MultinomialModel MultinomialModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MultinomialModel m;
    m.ms = j.value("ms", std::string{});
    m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.beta = j.at("beta").get<std::vector<double>>();
    m.column_names = j.at("column_names").get<std::vector<std::string>>();
    m.dict = feat::LevelDictionary::from_json(j.at("dict").dump());
    m.n_train = j.at("n_train").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.l2_penalty = j.at("l2_penalty").get<double>();
    m.tolerance = j.at("tolerance").get<double>();
    m.converged = j.at("converged").get<bool>();
    m.separation_warning = j.at("separation_warning").get<bool>();
    m.underdetermined_warning = j.value("underdetermined_warning", false);
    m.iterations = j.at("iterations").get<int>();
    return m;
}

}  // namespace mstk::model
