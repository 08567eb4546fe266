#include "mstk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace mstk::stats {

namespace {
// Wald intervals follow the conventional 1.96 multiplier exactly
constexpr double kZ95 = 1.96;
}

std::vector<TextProfile> aggregate_text_median(
    const std::vector<model::PredictedDistribution>& predictions) {
    struct Bucket {
        const ms::Occurrence* sample = nullptr;
        std::map<std::string, std::vector<std::vector<double>>> per_ms;
    };
    std::map<std::string, Bucket> by_text;
    for (const auto& pd : predictions) {
        if (!pd.occurrence) throw DataError("prediction without occurrence reference");
        Bucket& b = by_text[pd.occurrence->writing_id];
        if (!b.sample) b.sample = pd.occurrence;
        b.per_ms[pd.ms].push_back(pd.probabilities);
    }
    std::vector<TextProfile> out;
    for (auto& [writing_id, bucket] : by_text) {
        TextProfile tp;
        tp.writing_id = writing_id;
        tp.cefr = bucket.sample->cefr;
        tp.nationality = bucket.sample->nationality;
        tp.topic = bucket.sample->topic;
        for (auto& [ms_name, rows] : bucket.per_ms) {
            std::size_t k = rows.front().size();
            std::vector<double> medians(k, 0.0);
            for (std::size_t f = 0; f < k; ++f) {
                std::vector<double> column;
                column.reserve(rows.size());
                for (const auto& r : rows) column.push_back(r.at(f));
                medians[f] = 100.0 * num::median(std::move(column));
            }
            tp.medians[ms_name] = std::move(medians);
            tp.counts[ms_name] = rows.size();
        }
        out.push_back(std::move(tp));
    }
    return out;
}

// ------------------------------------------------------------ ordinal model

OrdinalData make_ordinal_data(const std::vector<TextProfile>& profiles,
                              const std::vector<std::string>& covariates,
                              const std::vector<ms::MicrosystemSpec>& specs,
                              bool include_l1) {
    struct Resolved {
        std::string ms;
        std::size_t form = 0;
    };
    std::vector<Resolved> resolved;
    for (const std::string& name : covariates) {
        auto dot = name.find('.');
        if (dot == std::string::npos)
            throw DataError("covariate '" + name + "' is not of the form MS.FORM");
        Resolved r;
        r.ms = name.substr(0, dot);
        const auto& spec = ms::find_microsystem(specs, r.ms);
        r.form = static_cast<std::size_t>(spec.form_index(name.substr(dot + 1))) - 1;
        resolved.push_back(std::move(r));
    }

    OrdinalData data;
    data.covariate_names = covariates;

    std::set<std::string> l1_levels;
    std::vector<const TextProfile*> kept;
    for (const TextProfile& tp : profiles) {
        bool complete = true;
        for (const Resolved& r : resolved)
            if (!tp.has(r.ms)) complete = false;
        if (!complete) {
            ++data.n_dropped;
            continue;
        }
        kept.push_back(&tp);
        if (include_l1) l1_levels.insert(tp.nationality);
    }

    std::vector<std::string> dummies(l1_levels.begin(), l1_levels.end());
    if (include_l1 && !dummies.empty()) {
        // first level is the reference: the thresholds absorb its effect
        for (std::size_t i = 1; i < dummies.size(); ++i)
            data.covariate_names.push_back("L1=" + dummies[i]);
    }

    std::set<int> level_set;
    for (const TextProfile* tp : kept) level_set.insert(ordinal(tp->cefr));
    for (int lv : level_set) data.levels.push_back(to_string(static_cast<Cefr>(lv)));
    std::map<int, int> level_rank;
    int rank = 1;
    for (int lv : level_set) level_rank[lv] = rank++;

    for (const TextProfile* tp : kept) {
        std::vector<double> row;
        for (const Resolved& r : resolved) row.push_back(tp->medians.at(r.ms).at(r.form));
        if (include_l1 && !dummies.empty()) {
            for (std::size_t i = 1; i < dummies.size(); ++i)
                row.push_back(tp->nationality == dummies[i] ? 1.0 : 0.0);
        }
        data.rows.push_back(std::move(row));
        data.y.push_back(level_rank.at(ordinal(tp->cefr)));
    }
    return data;
}

double ordinal_loglik(const std::vector<double>& params, const OrdinalData& data,
                      double ridge, std::vector<double>* grad) {
    const int j_levels = static_cast<int>(data.levels.size());
    const int n_thresh = j_levels - 1;
    const std::size_t p = data.covariate_names.size();
    if (params.size() != static_cast<std::size_t>(n_thresh) + p)
        throw DataError("ordinal_loglik: parameter size mismatch");
    if (grad) grad->assign(params.size(), 0.0);

    const double* alpha = params.data();
    const double* beta = params.data() + n_thresh;
    double ll = 0.0;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        double xb = 0.0;
        for (std::size_t m = 0; m < p; ++m) xb += beta[m] * data.rows[i][m];
        int y = data.y[i];
        double upper = (y == j_levels) ? 1.0 : num::sigmoid(alpha[y - 1] - xb);
        double lower = (y == 1) ? 0.0 : num::sigmoid(alpha[y - 2] - xb);
        double prob = std::max(upper - lower, 1e-300);
        ll += std::log(prob);
        if (grad) {
            double du = (y == j_levels) ? 0.0 : upper * (1.0 - upper);
            double dl = (y == 1) ? 0.0 : lower * (1.0 - lower);
            if (y < j_levels) (*grad)[y - 1] += du / prob;
            if (y > 1) (*grad)[y - 2] -= dl / prob;
            double common = -(du - dl) / prob;
            for (std::size_t m = 0; m < p; ++m)
                (*grad)[n_thresh + m] += common * data.rows[i][m];
        }
    }
    for (std::size_t m = 0; m < p; ++m) {
        ll -= 0.5 * ridge * beta[m] * beta[m];
        if (grad) (*grad)[n_thresh + m] -= ridge * beta[m];
    }
    return ll;
}

namespace {

// Observed-information Hessian of the penalized log-likelihood.
num::Matrix ordinal_hessian(const std::vector<double>& params, const OrdinalData& data,
                            double ridge) {
    const int j_levels = static_cast<int>(data.levels.size());
    const int n_thresh = j_levels - 1;
    const std::size_t p = data.covariate_names.size();
    const std::size_t dim = static_cast<std::size_t>(n_thresh) + p;
    num::Matrix h(dim, dim, 0.0);

    const double* alpha = params.data();
    const double* beta = params.data() + n_thresh;

    // t-vector of eta_j = alpha_j - x.beta: e_j in the threshold block, -x in
    // the slope block
    auto add_outer = [&](int ja, int jb, double w, const std::vector<double>& x) {
        auto entry = [&](int jj, std::size_t m) {
            // component m of the t-vector for threshold jj
            if (m < static_cast<std::size_t>(n_thresh))
                return (static_cast<int>(m) == jj) ? 1.0 : 0.0;
            return -x[m - n_thresh];
        };
        for (std::size_t r = 0; r < dim; ++r) {
            double tr = entry(ja, r);
            if (tr == 0.0) continue;
            for (std::size_t c = 0; c < dim; ++c) {
                double tc = entry(jb, c);
                if (tc != 0.0) h(r, c) += w * tr * tc;
            }
        }
    };

    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const std::vector<double>& x = data.rows[i];
        double xb = 0.0;
        for (std::size_t m = 0; m < p; ++m) xb += beta[m] * x[m];
        int y = data.y[i];
        double gu = (y == j_levels) ? 1.0 : num::sigmoid(alpha[y - 1] - xb);
        double gl = (y == 1) ? 0.0 : num::sigmoid(alpha[y - 2] - xb);
        double prob = std::max(gu - gl, 1e-300);
        double u = (y == j_levels) ? 0.0 : gu * (1.0 - gu);
        double v = (y == 1) ? 0.0 : gl * (1.0 - gl);
        double up = (y == j_levels) ? 0.0 : u * (1.0 - 2.0 * gu);
        double vp = (y == 1) ? 0.0 : v * (1.0 - 2.0 * gl);

        if (y < j_levels) add_outer(y - 1, y - 1, up / prob - (u * u) / (prob * prob), x);
        if (y > 1) add_outer(y - 2, y - 2, -vp / prob - (v * v) / (prob * prob), x);
        if (y < j_levels && y > 1) {
            double w = (u * v) / (prob * prob);
            add_outer(y - 1, y - 2, w, x);
            add_outer(y - 2, y - 1, w, x);
        }
    }
    for (std::size_t m = 0; m < p; ++m)
        h(n_thresh + m, n_thresh + m) -= ridge;
    return h;
}

bool thresholds_increasing(const std::vector<double>& params, int n_thresh) {
    for (int j = 1; j < n_thresh; ++j)
        if (params[j] <= params[j - 1]) return false;
    return true;
}

// Pinpoints linearly dependent covariate columns via a Cholesky pass over
// the centered Gram matrix; used to name the culprit when the information
// matrix is singular.
[[noreturn]] void raise_collinear(const OrdinalData& data) {
    const std::size_t p = data.covariate_names.size();
    const std::size_t n = data.rows.size();
    std::vector<double> mean(p, 0.0);
    for (const auto& row : data.rows)
        for (std::size_t j = 0; j < p; ++j) mean[j] += row[j];
    for (double& m : mean) m /= static_cast<double>(n);
    num::Matrix gram(p, p, 0.0);
    for (const auto& row : data.rows)
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                gram(a, b) += (row[a] - mean[a]) * (row[b] - mean[b]);
    try {
        num::cholesky_solve(gram, std::vector<double>(p, 0.0), &data.covariate_names);
    } catch (const DataError& inner) {
        throw DataError(std::string("singular information matrix: ") + inner.what());
    }
    throw DataError("singular information matrix");
}

}  // namespace

double OrdinalModel::pseudo_r2() const {
    if (loglik_null >= 0.0) return 0.0;
    return std::clamp(1.0 - loglik / loglik_null, 0.0, 1.0);
}

OrdinalModel fit_ordinal(const OrdinalData& data, double ridge, double tolerance,
                         int max_iterations) {
    const int j_levels = static_cast<int>(data.levels.size());
    if (j_levels < 2) throw DataError("fit_ordinal: outcome has a single level");
    if (data.rows.empty()) throw DataError("fit_ordinal: no rows");
    const int n_thresh = j_levels - 1;
    const std::size_t p = data.covariate_names.size();
    const std::size_t dim = static_cast<std::size_t>(n_thresh) + p;

    // start at empirical cumulative logits, zero slopes
    std::vector<double> counts(j_levels, 0.0);
    for (int y : data.y) counts[y - 1] += 1.0;
    const double n = static_cast<double>(data.y.size());
    std::vector<double> params(dim, 0.0);
    double cum = 0.0;
    for (int j = 0; j < n_thresh; ++j) {
        cum += counts[j];
        double q = std::clamp(cum / n, 1e-6, 1.0 - 1e-6);
        params[j] = std::log(q / (1.0 - q));
    }

    // thresholds-only log-likelihood has a closed form at the empirical fit
    double ll_null = 0.0;
    for (int j = 0; j < j_levels; ++j)
        if (counts[j] > 0) ll_null += counts[j] * std::log(counts[j] / n);

    std::vector<double> grad;
    double ll = ordinal_loglik(params, data, ridge, &grad);

    OrdinalModel m;
    m.levels = data.levels;
    m.covariate_names = data.covariate_names;
    m.loglik_null = ll_null;
    m.n_used = data.rows.size();
    m.n_dropped = data.n_dropped;

    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::fabs(g));
        if (gmax <= tolerance) {
            m.converged = true;
            break;
        }
        num::Matrix hess = ordinal_hessian(params, data, ridge);
        // Newton direction: solve (-H) d = grad
        num::Matrix neg(dim, dim);
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = 0; c < dim; ++c) neg(r, c) = -hess(r, c);
        std::vector<double> direction;
        try {
            direction = num::cholesky_solve(neg, grad, &data.covariate_names);
        } catch (const DataError&) {
            // fall back to a gradient step when the information matrix stalls
            direction = grad;
        }
        double step = 1.0;
        bool accepted = false;
        std::vector<double> trial(dim), trial_grad;
        for (int half = 0; half < 40; ++half) {
            for (std::size_t d = 0; d < dim; ++d) trial[d] = params[d] + step * direction[d];
            if (thresholds_increasing(trial, n_thresh)) {
                double ll_trial = ordinal_loglik(trial, data, ridge, &trial_grad);
                double trial_gmax = 0.0;
                for (double g : trial_grad) trial_gmax = std::max(trial_gmax, std::fabs(g));
                double cur_gmax = 0.0;
                for (double g : grad) cur_gmax = std::max(cur_gmax, std::fabs(g));
                // near the optimum the likelihood gain drops below double
                // rounding; a Newton step that halves the gradient is still
                // progress
                if (ll_trial > ll || trial_gmax < 0.5 * cur_gmax) {
                    params.swap(trial);
                    ll = std::max(ll, ll_trial);
                    grad.swap(trial_grad);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    m.iterations = iter;
    if (!m.converged) {
        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::fabs(g));
        if (gmax <= tolerance) m.converged = true;
    }
    if (!m.converged)
        throw ConvergenceError("ordinal fit did not reach gradient tolerance after " +
                               std::to_string(iter) + " iterations");

    m.thresholds.assign(params.begin(), params.begin() + n_thresh);
    m.slopes.assign(params.begin() + n_thresh, params.end());
    m.loglik = ordinal_loglik(params, data, 0.0, nullptr);

    num::Matrix hess = ordinal_hessian(params, data, ridge);
    num::Matrix neg(dim, dim);
    for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) neg(r, c) = -hess(r, c);
    std::vector<std::string> all_names;
    for (int j = 0; j < n_thresh; ++j) all_names.push_back("threshold" + std::to_string(j + 1));
    for (const auto& c : data.covariate_names) all_names.push_back(c);
    num::Matrix cov;
    try {
        cov = num::spd_inverse(neg, &all_names);
    } catch (const DataError&) {
        raise_collinear(data);
    }
    for (std::size_t mcol = 0; mcol < p; ++mcol)
        m.slope_se.push_back(std::sqrt(std::max(cov(n_thresh + mcol, n_thresh + mcol), 0.0)));
    return m;
}

OddsRatioReport odds_ratio_report(const OrdinalModel& m) {
    OddsRatioReport report;
    for (std::size_t i = 0; i < m.slopes.size(); ++i) {
        OddsRatioEntry e;
        e.covariate = m.covariate_names[i];
        e.odds_ratio = std::exp(m.slopes[i]);
        double se = m.slope_se.at(i);
        e.ci_low = std::exp(m.slopes[i] - kZ95 * se);
        e.ci_high = std::exp(m.slopes[i] + kZ95 * se);
        double z = se > 0 ? m.slopes[i] / se : 0.0;
        e.p_value = num::z_pvalue(z);
        e.significant = e.p_value < 0.05;
        report.entries.push_back(std::move(e));
    }
    return report;
}

ConfounderComparison refit_with_confounder(const std::vector<TextProfile>& profiles,
                                           const std::vector<std::string>& covariates,
                                           const std::vector<ms::MicrosystemSpec>& specs,
                                           double delta) {
    ConfounderComparison cmp;
    OrdinalData without = make_ordinal_data(profiles, covariates, specs, false);
    OrdinalData with = make_ordinal_data(profiles, covariates, specs, true);
    OrdinalModel m0 = fit_ordinal(without);
    OrdinalModel m1 = fit_ordinal(with);
    cmp.without_confounder = odds_ratio_report(m0);
    cmp.with_confounder = odds_ratio_report(m1);
    cmp.n_dropped_without = m0.n_dropped;
    cmp.n_dropped_with = m1.n_dropped;
    for (std::size_t i = 0; i < covariates.size(); ++i) {
        double o0 = cmp.without_confounder.entries[i].odds_ratio;
        double o1 = cmp.with_confounder.entries[i].odds_ratio;
        if (std::fabs(o1 - o0) > delta) cmp.moved.push_back(covariates[i]);
    }
    return cmp;
}

// ---------------------------------------------------------------- rank test

KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw DataError("kruskal_wallis: need at least 2 groups");
    std::size_t n_total = 0;
    for (const auto& g : groups) {
        if (g.empty()) throw DataError("kruskal_wallis: empty group");
        n_total += g.size();
    }
    if (n_total < 3) throw DataError("kruskal_wallis: need at least 3 observations");

    struct Obs {
        double value;
        std::size_t group;
    };
    std::vector<Obs> pooled;
    pooled.reserve(n_total);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (double v : groups[g]) pooled.push_back({v, g});
    std::sort(pooled.begin(), pooled.end(),
              [](const Obs& a, const Obs& b) { return a.value < b.value; });

    // midranks and tie correction
    std::vector<double> rank(n_total);
    double tie_sum = 0.0;
    for (std::size_t i = 0; i < n_total;) {
        std::size_t j = i;
        while (j < n_total && pooled[j].value == pooled[i].value) ++j;
        double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t) rank[t] = mid;
        double ties = static_cast<double>(j - i);
        tie_sum += ties * ties * ties - ties;
        i = j;
    }

    std::vector<double> rank_sum(groups.size(), 0.0);
    for (std::size_t i = 0; i < n_total; ++i) rank_sum[pooled[i].group] += rank[i];

    const double n = static_cast<double>(n_total);
    double h = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g)
        h += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    double correction = 1.0 - tie_sum / (n * n * n - n);
    KruskalWallisResult result;
    result.df = static_cast<int>(groups.size()) - 1;
    if (correction <= 0.0) {  // every value identical
        result.h = 0.0;
        result.p_value = 1.0;
        return result;
    }
    result.h = h / correction;
    result.p_value = num::chi2_sf(result.h, result.df);
    return result;
}

// ---------------------------------------------------------------- agreement

AgreementResult fleiss_kappa(const std::vector<std::vector<int>>& table, int n_raters) {
    if (table.empty()) throw DataError("fleiss_kappa: empty table");
    const std::size_t n_items = table.size();
    const std::size_t n_cats = table.front().size();
    for (const auto& row : table) {
        if (row.size() != n_cats) throw DataError("fleiss_kappa: ragged table");
        int sum = std::accumulate(row.begin(), row.end(), 0);
        if (sum != n_raters)
            throw DataError("fleiss_kappa: row sums to " + std::to_string(sum) +
                            ", expected " + std::to_string(n_raters));
    }
    const double n = static_cast<double>(n_raters);
    const double big_n = static_cast<double>(n_items);

    double p_bar = 0.0;
    std::vector<double> p_j(n_cats, 0.0);
    for (const auto& row : table) {
        double sum_sq = 0.0;
        for (std::size_t c = 0; c < n_cats; ++c) {
            sum_sq += static_cast<double>(row[c]) * row[c];
            p_j[c] += row[c];
        }
        p_bar += (sum_sq - n) / (n * (n - 1.0));
    }
    p_bar /= big_n;
    double p_e = 0.0, p_cube = 0.0;
    for (double& pj : p_j) {
        pj /= big_n * n;
        p_e += pj * pj;
        p_cube += pj * pj * pj;
    }
    if (p_e >= 1.0) throw DataError("fleiss_kappa: degenerate margins (single category)");

    AgreementResult r;
    r.n_items = n_items;
    r.n_raters = static_cast<std::size_t>(n_raters);
    r.n_categories = n_cats;
    r.kappa = (p_bar - p_e) / (1.0 - p_e);

    double var = 2.0 / (big_n * n * (n - 1.0)) *
                 (p_e - (2.0 * n - 3.0) * p_e * p_e + 2.0 * (n - 2.0) * p_cube) /
                 ((1.0 - p_e) * (1.0 - p_e));
    r.z = var > 0 ? r.kappa / std::sqrt(var) : 0.0;
    r.p_value = num::z_pvalue(r.z);
    return r;
}

namespace {

// kappa with the degenerate single-category convention used inside the
// permutation loop (both raters constant and equal -> 1).
double cohen_kappa_value(const std::vector<std::string>& a,
                         const std::vector<std::string>& b, bool* degenerate) {
    std::map<std::string, double> ma, mb;
    double po = 0.0;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
        if (a[i] == b[i]) po += 1.0;
    }
    po /= n;
    double pe = 0.0;
    for (const auto& [cat, ca] : ma) {
        auto it = mb.find(cat);
        if (it != mb.end()) pe += (ca / n) * (it->second / n);
    }
    if (pe >= 1.0 - 1e-12) {
        if (degenerate) *degenerate = true;
        return po >= 1.0 - 1e-12 ? 1.0 : 0.0;
    }
    if (degenerate) *degenerate = false;
    return (po - pe) / (1.0 - pe);
}

}  // namespace

AgreementResult cohen_kappa(const std::vector<std::string>& ratings_a,
                            const std::vector<std::string>& ratings_b) {
    if (ratings_a.size() != ratings_b.size())
        throw DataError("cohen_kappa: rating vectors differ in length");
    if (ratings_a.empty()) throw DataError("cohen_kappa: empty ratings");
    const double n = static_cast<double>(ratings_a.size());

    std::map<std::string, double> ma, mb;
    std::set<std::string> cats;
    double po = 0.0;
    for (std::size_t i = 0; i < ratings_a.size(); ++i) {
        ma[ratings_a[i]] += 1.0;
        mb[ratings_b[i]] += 1.0;
        cats.insert(ratings_a[i]);
        cats.insert(ratings_b[i]);
        if (ratings_a[i] == ratings_b[i]) po += 1.0;
    }
    po /= n;
    double pe = 0.0, var_term = 0.0;
    for (const std::string& cat : cats) {
        double pa = (ma.count(cat) ? ma[cat] : 0.0) / n;
        double pb = (mb.count(cat) ? mb[cat] : 0.0) / n;
        pe += pa * pb;
        var_term += pa * pb * (pa + pb);
    }
    if (pe >= 1.0 - 1e-12)
        throw DataError("cohen_kappa: chance agreement is 1 (both raters constant)");

    AgreementResult r;
    r.n_items = ratings_a.size();
    r.n_raters = 2;
    r.n_categories = cats.size();
    r.kappa = (po - pe) / (1.0 - pe);
    double var0 = (pe + pe * pe - var_term) / (n * (1.0 - pe) * (1.0 - pe));
    r.z = var0 > 0 ? r.kappa / std::sqrt(var0) : 0.0;
    r.p_value = num::z_pvalue(r.z);
    return r;
}

std::vector<PairPermutationResult> permutation_test_kappa(const RaterSample& sample1,
                                                          const RaterSample& sample2,
                                                          int n_perm, std::uint64_t seed) {
    if (sample1.raters != sample2.raters)
        throw DataError("permutation_test_kappa: samples carry different rater sets");
    const std::size_t n_raters = sample1.raters.size();
    for (const auto& item : sample1.items)
        if (item.size() != n_raters) throw DataError("permutation_test_kappa: ragged sample 1");
    for (const auto& item : sample2.items)
        if (item.size() != n_raters) throw DataError("permutation_test_kappa: ragged sample 2");

    const std::size_t n1 = sample1.items.size();
    std::vector<std::vector<std::string>> pooled = sample1.items;
    pooled.insert(pooled.end(), sample2.items.begin(), sample2.items.end());

    auto pair_kappa = [&](const std::vector<std::vector<std::string>>& items, std::size_t lo,
                          std::size_t hi, std::size_t a, std::size_t b,
                          const std::vector<std::size_t>* order) {
        std::vector<std::string> va, vb;
        va.reserve(hi - lo);
        vb.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& row = order ? items[(*order)[i]] : items[i];
            va.push_back(row[a]);
            vb.push_back(row[b]);
        }
        return cohen_kappa_value(va, vb, nullptr);
    };

    std::vector<PairPermutationResult> results;
    for (std::size_t a = 0; a < n_raters; ++a) {
        for (std::size_t b = a + 1; b < n_raters; ++b) {
            PairPermutationResult pr;
            pr.rater_a = sample1.raters[a];
            pr.rater_b = sample1.raters[b];
            pr.low_permutation_warning = n_perm < 100;
            pr.kappa_sample1 = pair_kappa(sample1.items, 0, n1, a, b, nullptr);
            pr.kappa_sample2 =
                pair_kappa(sample2.items, 0, sample2.items.size(), a, b, nullptr);
            double observed = std::fabs(pr.kappa_sample1 - pr.kappa_sample2);

            auto engine =
                rng::make_engine(seed, "perm:" + pr.rater_a + ":" + pr.rater_b);
            std::vector<std::size_t> order(pooled.size());
            std::iota(order.begin(), order.end(), 0);
            int extreme = 0;
            for (int t = 0; t < n_perm; ++t) {
                std::shuffle(order.begin(), order.end(), engine);
                double k1 = pair_kappa(pooled, 0, n1, a, b, &order);
                double k2 = pair_kappa(pooled, n1, pooled.size(), a, b, &order);
                if (std::fabs(k1 - k2) >= observed - 1e-12) ++extreme;
            }
            pr.p_value = (1.0 + extreme) / (1.0 + n_perm);
            results.push_back(std::move(pr));
        }
    }
    return results;
}

double pseudo_r2(double ll_model, double ll_null) {
    if (ll_null == 0.0) throw DataError("pseudo_r2: null log-likelihood is zero");
    if (ll_model > 0.0 || ll_null > 0.0)
        throw DataError("pseudo_r2: log-likelihoods must be non-positive");
    if (ll_model < ll_null - 1e-9)
        throw DataError("pseudo_r2: model log-likelihood below the null");
    return std::clamp(1.0 - ll_model / ll_null, 0.0, 1.0);
}

// ------------------------------------------------------------- frequencies

std::vector<FormFrequencyRow> normalized_form_frequency(
    const std::vector<Document>& docs, const ms::MicrosystemSpec& spec,
    const std::vector<ms::Occurrence>& occurrences) {
    struct Key {
        std::string topic;
        int cefr;
        bool operator<(const Key& o) const {
            return std::tie(topic, cefr) < std::tie(o.topic, o.cefr);
        }
    };
    std::map<Key, std::size_t> group_tokens;
    for (const Document& d : docs) {
        Key key{d.topic_id.value_or("__UNKNOWN__"), ordinal(d.cefr)};
        group_tokens[key] += d.token_count();
    }
    std::map<Key, std::map<std::string, std::size_t>> counts;
    for (const ms::Occurrence& o : occurrences) {
        if (o.ms != spec.name) continue;
        Key key{o.topic.empty() ? "__UNKNOWN__" : o.topic, ordinal(o.cefr)};
        counts[key][o.form] += 1;
    }
    std::vector<FormFrequencyRow> rows;
    for (const auto& [key, tokens] : group_tokens) {
        for (const std::string& form : spec.forms) {
            FormFrequencyRow row;
            row.topic = key.topic;
            row.cefr = static_cast<Cefr>(key.cefr);
            row.form = form;
            auto git = counts.find(key);
            row.count = (git != counts.end() && git->second.count(form))
                            ? git->second.at(form)
                            : 0;
            row.group_tokens = tokens;
            row.freq_per_1000 =
                tokens ? 1000.0 * static_cast<double>(row.count) / tokens : 0.0;
            row.outlier = row.freq_per_1000 > 10.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace mstk::stats
