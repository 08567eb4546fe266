#include "mstk/reports.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

namespace mstk::reports {

using str::fixed;

void write_extraction_report(const ms::ExtractionReport& report, std::ostream& out) {
    out << ",precision,recall,f1-score,support\n";
    std::vector<ms::ExtractionReportRow> rows = report.rows;
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.label < b.label; });
    for (const auto& r : rows) {
        out << csv::escape(r.label) << ',' << fixed(r.precision, 2) << ','
            << fixed(r.recall, 2) << ',' << fixed(r.f1, 2) << ',' << r.support << "\n";
    }
    out << "accuracy,,," << fixed(report.micro_accuracy, 2) << ','
        << report.macro_avg.support << "\n";
    for (const auto* avg : {&report.macro_avg, &report.weighted_avg}) {
        out << avg->label << ',' << fixed(avg->precision, 2) << ',' << fixed(avg->recall, 2)
            << ',' << fixed(avg->f1, 2) << ',' << avg->support << "\n";
    }
}

namespace {

std::string slash_join(const std::vector<double>& values, int decimals) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += " / ";
        out += fixed(values[i], decimals);
    }
    return out;
}

}  // namespace

void write_classification_report(const std::vector<ClassificationRow>& rows,
                                 std::ostream& out) {
    out << "Microsystems,Global accuracy (95% CI),Balanced accuracy,Recall,Precision\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        std::vector<double> bal, rec, prec;
        for (const auto& c : r.per_class) {
            bal.push_back(c.balanced_accuracy);
            rec.push_back(c.recall);
            prec.push_back(c.precision);
        }
        std::string global = fixed(r.accuracy, 2) + " (" + fixed(r.ci_low, 4) + ", " +
                             fixed(r.ci_high, 4) + ")";
        out << csv::escape(row.ms) << ',' << csv::escape(global) << ','
            << csv::escape(slash_join(bal, 4)) << ',' << csv::escape(slash_join(rec, 4))
            << ',' << csv::escape(slash_join(prec, 4)) << "\n";
    }
}

void write_odds_ratio_report(const std::vector<OddsRatioRow>& rows, std::ostream& out) {
    out << "Microsystems,Components,Odds ratio,95% CI\n";
    for (const auto& row : rows) {
        std::string or_text = fixed(row.entry.odds_ratio, 3);
        if (row.entry.significant) or_text += "*";
        std::string ci = fixed(row.entry.ci_low, 3) + ", " + fixed(row.entry.ci_high, 3);
        out << csv::escape(row.ms) << ',' << csv::escape(row.component) << ','
            << csv::escape(or_text) << ',' << csv::escape(ci) << "\n";
    }
    out << "# * p-value <.05\n";
}

void write_importance_report(const std::vector<model::ImportanceEntry>& entries,
                             std::ostream& out, std::size_t top_n) {
    out << ",Feature,Importance\n";
    std::size_t limit = top_n ? std::min(top_n, entries.size()) : entries.size();
    for (std::size_t i = 0; i < limit; ++i) {
        out << (i + 1) << ',' << csv::escape(entries[i].feature) << ','
            << fixed(entries[i].percent, 3) << "\n";
    }
}

void write_fleiss_report(const std::vector<FleissRow>& rows, std::ostream& out) {
    out << "Microsystems,N,Fleiss Kappa,z,p-value\n";
    for (const auto& row : rows) {
        out << csv::escape(row.ms) << ',' << row.result.n_items << ','
            << fixed(row.result.kappa, 3) << ',' << fixed(row.result.z, 3) << ','
            << fixed(row.result.p_value, 3) << "\n";
    }
}

void write_pairwise_report(const std::vector<PairwiseRow>& rows, std::ostream& out) {
    out << "rater_a,rater_b,cohen_kappa,z,p_value,permutation_p\n";
    for (const auto& row : rows) {
        out << csv::escape(row.rater_a) << ',' << csv::escape(row.rater_b) << ','
            << fixed(row.result.kappa, 3) << ',' << fixed(row.result.z, 3) << ','
            << fixed(row.result.p_value, 3) << ',';
        if (row.permutation_p >= 0) out << fixed(row.permutation_p, 4);
        out << "\n";
    }
}

void write_profiles(const std::vector<stats::TextProfile>& profiles,
                    const std::vector<ms::MicrosystemSpec>& specs, std::ostream& out) {
    out << "writing_id,cefr,ms,form,median_pct,occurrences\n";
    for (const auto& tp : profiles) {
        for (const auto& spec : specs) {
            auto it = tp.medians.find(spec.name);
            if (it == tp.medians.end()) continue;
            for (std::size_t f = 0; f < spec.forms.size(); ++f) {
                out << csv::escape(tp.writing_id) << ',' << to_string(tp.cefr) << ','
                    << spec.name << ',' << spec.forms[f] << ',' << fixed(it->second[f], 4)
                    << ',' << tp.counts.at(spec.name) << "\n";
            }
        }
    }
}

void write_frequency_report(const std::vector<stats::FormFrequencyRow>& rows,
                            std::ostream& out) {
    out << "topic,cefr,form,count,group_tokens,freq_per_1000,outlier\n";
    for (const auto& r : rows) {
        out << csv::escape(r.topic) << ',' << to_string(r.cefr) << ',' << csv::escape(r.form)
            << ',' << r.count << ',' << r.group_tokens << ',' << fixed(r.freq_per_1000, 4)
            << ',' << (r.outlier ? 1 : 0) << "\n";
    }
}

void write_predictions(const std::vector<model::PredictedDistribution>& preds,
                       const std::vector<std::string>& form_labels, std::ostream& out) {
    out << "writing_id,sent,idx,form_gold";
    for (const auto& label : form_labels) out << ",p_" << label;
    out << ",argmax\n";
    for (const auto& pd : preds) {
        if (!pd.occurrence) throw DataError("prediction without occurrence reference");
        out << csv::escape(pd.occurrence->writing_id) << ',' << pd.occurrence->sentence_no
            << ',' << pd.occurrence->anchor_index << ',' << pd.gold_label;
        for (double p : pd.probabilities) out << ',' << str::fixed(p, 9);
        out << ',' << pd.argmax_label << "\n";
    }
}

std::vector<model::PredictedDistribution> read_predictions(
    std::istream& in, const std::vector<ms::Occurrence>& occurrences) {
    std::map<std::tuple<std::string, int, int>, const ms::Occurrence*> index;
    for (const auto& o : occurrences)
        index[{o.writing_id, o.sentence_no, o.anchor_index}] = &o;

    std::vector<model::PredictedDistribution> out;
    std::string line;
    bool header = true;
    std::vector<std::string> labels;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols = csv::parse_line(line);
        if (header) {
            header = false;
            for (std::size_t c = 4; c + 1 < cols.size(); ++c) {
                if (!str::starts_with(cols[c], "p_"))
                    throw ParseError("prediction CSV: unexpected column '" + cols[c] + "'");
                labels.push_back(cols[c].substr(2));
            }
            continue;
        }
        if (cols.size() != 5 + labels.size())
            throw ParseError("prediction CSV: wrong column count");
        model::PredictedDistribution pd;
        auto key = std::make_tuple(cols[0], std::stoi(cols[1]), std::stoi(cols[2]));
        auto it = index.find(key);
        if (it == index.end())
            throw DataError("prediction row " + cols[0] + ":" + cols[1] + ":" + cols[2] +
                            " has no matching occurrence");
        pd.occurrence = it->second;
        pd.ms = it->second->ms;
        pd.gold_label = cols[3];
        pd.gold_index = it->second->form_index;
        for (std::size_t c = 0; c < labels.size(); ++c)
            pd.probabilities.push_back(std::stod(cols[4 + c]));
        pd.argmax_label = cols.back();
        pd.argmax_index =
            1 + static_cast<int>(std::max_element(pd.probabilities.begin(),
                                                  pd.probabilities.end()) -
                                 pd.probabilities.begin());
        out.push_back(std::move(pd));
    }
    return out;
}

}  // namespace mstk::reports
