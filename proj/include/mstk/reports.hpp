#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mstk/microsystems.hpp"
#include "mstk/model.hpp"
#include "mstk/stats.hpp"

namespace mstk::reports {

// Extraction quality per class, alphabetical rows plus accuracy and the
// macro / weighted averages (one CSV per microsystem).
void write_extraction_report(const ms::ExtractionReport& report, std::ostream& out);

// Classification summary: one row per microsystem with slash-joined
// per-class values. Columns: Microsystems, Global accuracy (95% CI),
// Balanced accuracy, Recall, Precision.
struct ClassificationRow {
    std::string ms;
    model::ClassificationReport report;
};
void write_classification_report(const std::vector<ClassificationRow>& rows,
                                 std::ostream& out);

// Odds ratios per microsystem component: Microsystems, Components,
// Odds ratio, 95% CI, with '*' marking p < .05.
struct OddsRatioRow {
    std::string ms;
    std::string component;
    stats::OddsRatioEntry entry;
};
void write_odds_ratio_report(const std::vector<OddsRatioRow>& rows, std::ostream& out);

// Scaled feature importance, descending.
void write_importance_report(const std::vector<model::ImportanceEntry>& entries,
                             std::ostream& out, std::size_t top_n = 0);

// Fleiss' kappa per microsystem.
struct FleissRow {
    std::string ms;
    stats::AgreementResult result;
};
void write_fleiss_report(const std::vector<FleissRow>& rows, std::ostream& out);

// Pairwise Cohen's kappa (optionally with permutation p-values).
struct PairwiseRow {
    std::string rater_a;
    std::string rater_b;
    stats::AgreementResult result;
    double permutation_p = -1.0;  // < 0 when not computed
};
void write_pairwise_report(const std::vector<PairwiseRow>& rows, std::ostream& out);

// Per-text medians (box-plot input): writing_id, cefr, ms, form, median_pct.
void write_profiles(const std::vector<stats::TextProfile>& profiles,
                    const std::vector<ms::MicrosystemSpec>& specs, std::ostream& out);

// Normalized form frequencies per topic x CEFR.
void write_frequency_report(const std::vector<stats::FormFrequencyRow>& rows,
                            std::ostream& out);

// Per-occurrence prediction dump: writing_id, sent, idx, form_gold,
// p_<form>..., argmax.
void write_predictions(const std::vector<model::PredictedDistribution>& preds,
                       const std::vector<std::string>& form_labels, std::ostream& out);
std::vector<model::PredictedDistribution> read_predictions(
    std::istream& in, const std::vector<ms::Occurrence>& occurrences);

}  // namespace mstk::reports
