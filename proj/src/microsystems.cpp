#include "mstk/microsystems.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mstk::ms {

namespace {

struct MsInfo {
    const char* name;
    std::vector<const char*> forms;
    const char* function;
};

const std::vector<MsInfo>& inventory() {
    static const std::vector<MsInfo> table = {
        {"PRF", {"IT", "THIS", "THAT"}, "reference to an entity or clause"},
        {"DET", {"A", "THE", "ZERO"}, "determining a noun"},
        {"MLTNN",
         {"N2N1", "N1OFN2", "N2SN1"},
         "noun pairs functioning as compound, prepositional or genitive phrase"},
        {"DUR", {"FOR", "SINCE", "DURING"}, "complementing a verb with duration information"},
        {"QUANT1", {"ANY", "SOME"}, "determining an unspecified quantity"},
        {"QUANT2", {"MANY", "MUCH"}, "determining an important quantity"},
        {"REL", {"THAT", "WHICH", "WHO"}, "subordinator referring to an entity"},
    };
    return table;
}

}  // namespace

int MicrosystemSpec::form_index(const std::string& form) const {
    for (std::size_t i = 0; i < forms.size(); ++i)
        if (forms[i] == form) return static_cast<int>(i) + 1;
    throw DataError("microsystem " + name + " has no form '" + form + "'");
}

std::vector<MicrosystemSpec> load_microsystems(const std::string& dsl_text) {
    std::vector<query::Pattern> patterns = query::parse_pattern_file(dsl_text);
    std::map<std::string, query::Pattern> by_name;
    for (auto& p : patterns) by_name[p.name] = std::move(p);

    std::vector<MicrosystemSpec> specs;
    for (const MsInfo& info : inventory()) {
        MicrosystemSpec spec;
        spec.name = info.name;
        spec.function = info.function;
        for (const char* form : info.forms) {
            spec.forms.emplace_back(form);
            std::string key = std::string(info.name) + "." + form;
            auto it = by_name.find(key);
            if (it == by_name.end())
                throw DataError("pattern file defines no pattern '" + key + "'");
            spec.patterns[form] = it->second;
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<MicrosystemSpec> builtin_microsystems() {
    return load_microsystems(builtin_pattern_dsl());
}

const MicrosystemSpec& find_microsystem(const std::vector<MicrosystemSpec>& specs,
                                        const std::string& name) {
    for (const auto& s : specs)
        if (s.name == name) return s;
    std::string known;
    for (const auto& s : specs) {
        if (!known.empty()) known += ", ";
        known += s.name;
    }
    throw DataError("unknown microsystem '" + name + "' (known: " + known + ")");
}

Extraction extract_occurrences(const MicrosystemSpec& spec,
                               const std::vector<Document>& docs) {
    struct SiteKey {
        std::size_t doc;
        std::size_t sent;
        int anchor;
        bool operator<(const SiteKey& o) const {
            return std::tie(doc, sent, anchor) < std::tie(o.doc, o.sent, o.anchor);
        }
    };
    struct SiteHit {
        std::string form;
        int span = 1;
    };
    std::map<SiteKey, std::vector<SiteHit>> sites;

    for (const std::string& form : spec.forms) {
        const query::Pattern& pattern = spec.patterns.at(form);
        query::match_corpus(pattern, docs, [&](const query::CorpusMatch& cm) {
            SiteKey key{cm.doc_index, cm.sentence_index, cm.match.anchor_index};
            auto& hits = sites[key];
            for (const SiteHit& h : hits)
                if (h.form == form) return;  // one occurrence per anchor per form
            hits.push_back(SiteHit{form, cm.match.span_length()});
        });
    }

    Extraction out;
    for (const auto& [key, hits] : sites) {
        const Document& doc = docs[key.doc];
        if (hits.size() > 1) {
            OverlapRecord rec;
            rec.writing_id = doc.writing_id;
            rec.sentence_no = static_cast<int>(key.sent) + 1;
            rec.anchor_index = key.anchor;
            for (const SiteHit& h : hits) rec.forms.push_back(h.form);
            out.overlaps.push_back(std::move(rec));
            continue;
        }
        Occurrence occ;
        occ.ms = spec.name;
        occ.form = hits.front().form;
        occ.form_index = spec.form_index(occ.form);
        occ.writing_id = doc.writing_id;
        occ.cefr = doc.cefr;
        occ.nationality = doc.nationality;
        occ.topic = doc.topic_id.value_or("");
        occ.sentence_no = static_cast<int>(key.sent) + 1;
        occ.anchor_index = key.anchor;
        occ.span_length = hits.front().span;
        occ.sentence = &doc.sentences[key.sent];
        occ.doc = &doc;
        out.occurrences.push_back(std::move(occ));
    }
    return out;
}

void write_occurrences_tsv(const std::vector<Occurrence>& occurrences, std::ostream& out) {
    out << "ms\tform\twriting_id\tcefr\tnationality\ttopic\tsent\tidx\tspan\n";
    for (const Occurrence& o : occurrences) {
        out << o.ms << '\t' << o.form << '\t' << o.writing_id << '\t' << to_string(o.cefr)
            << '\t' << o.nationality << '\t' << o.topic << '\t' << o.sentence_no << '\t'
            << o.anchor_index << '\t' << o.span_length << "\n";
    }
}

std::vector<Occurrence> read_occurrences_tsv(std::istream& in,
                                             const std::vector<Document>& docs,
                                             const std::vector<MicrosystemSpec>& specs) {
    std::map<std::string, const Document*> by_id;
    for (const Document& d : docs) by_id[d.writing_id] = &d;

    std::vector<Occurrence> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && str::starts_with(line, "ms\t")) continue;
        std::vector<std::string> cols = str::split(line, '\t');
        if (cols.size() != 9)
            throw ParseError("occurrences TSV line " + std::to_string(line_no) +
                             ": expected 9 columns, got " + std::to_string(cols.size()));
        Occurrence o;
        o.ms = cols[0];
        o.form = cols[1];
        o.writing_id = cols[2];
        o.cefr = parse_cefr(cols[3]);
        o.nationality = cols[4];
        o.topic = cols[5];
        o.sentence_no = std::stoi(cols[6]);
        o.anchor_index = std::stoi(cols[7]);
        o.span_length = std::stoi(cols[8]);
        o.form_index = find_microsystem(specs, o.ms).form_index(o.form);
        auto it = by_id.find(o.writing_id);
        if (it == by_id.end())
            throw DataError("occurrences TSV line " + std::to_string(line_no) +
                            ": writing_id '" + o.writing_id + "' not in corpus");
        o.doc = it->second;
        if (o.sentence_no < 1 ||
            o.sentence_no > static_cast<int>(it->second->sentences.size()))
            throw DataError("occurrences TSV line " + std::to_string(line_no) +
                            ": sentence " + std::to_string(o.sentence_no) +
                            " not in document '" + o.writing_id + "'");
        o.sentence = &it->second->sentences[o.sentence_no - 1];
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<GoldSite> read_gold_csv(std::istream& in) {
    std::vector<GoldSite> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = str::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        if (line_no == 1 && str::starts_with(trimmed, "writing_id")) continue;
        std::vector<std::string> cols = csv::parse_line(trimmed);
        if (cols.size() != 5)
            throw ParseError("gold CSV line " + std::to_string(line_no) +
                             ": expected 5 columns writing_id,sent_no,anchor_index,ms,annotation");
        GoldSite g;
        g.writing_id = cols[0];
        g.sentence_no = std::stoi(cols[1]);
        g.anchor_index = std::stoi(cols[2]);
        g.ms = cols[3];
        g.annotation = cols[4];
        out.push_back(std::move(g));
    }
    return out;
}

ExtractionReport evaluate_extraction(const MicrosystemSpec& spec,
                                     const std::vector<Occurrence>& predicted,
                                     const std::vector<GoldSite>& gold) {
    const int k = spec.k();
    const int none = k;  // index of the NONE label

    auto label_index = [&](const std::string& label) {
        if (str::lower(label) == "none") return none;
        return spec.form_index(label) - 1;
    };

    std::map<std::tuple<std::string, int, int>, int> gold_at;
    for (const GoldSite& g : gold) {
        if (g.ms != spec.name) continue;
        gold_at[{g.writing_id, g.sentence_no, g.anchor_index}] = label_index(g.annotation);
    }
    if (gold_at.empty()) throw DataError("gold standard has no rows for " + spec.name);

    std::map<std::tuple<std::string, int, int>, int> pred_at;
    for (const Occurrence& o : predicted) {
        if (o.ms != spec.name)
            throw DataError("evaluate_extraction: occurrence from " + o.ms +
                            " mixed into " + spec.name);
        std::tuple<std::string, int, int> key{o.writing_id, o.sentence_no, o.anchor_index};
        if (!gold_at.count(key))
            throw DataError("extracted site " + o.writing_id + ":" +
                            std::to_string(o.sentence_no) + ":" +
                            std::to_string(o.anchor_index) +
                            " is not covered by the gold standard");
        pred_at[key] = label_index(o.form);
    }

    ExtractionReport report;
    report.ms = spec.name;
    report.labels = spec.forms;
    report.labels.push_back("NONE");
    report.confusion = num::Matrix(k + 1, k + 1, 0.0);
    for (const auto& [site, g] : gold_at) {
        auto it = pred_at.find(site);
        int p = (it == pred_at.end()) ? none : it->second;
        report.confusion(g, p) += 1.0;
    }

    double total = 0.0, diag = 0.0;
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= k; ++j) total += report.confusion(i, j);
    std::vector<double> row_sum(k + 1, 0.0), col_sum(k + 1, 0.0);
    for (int i = 0; i <= k; ++i) {
        diag += report.confusion(i, i);
        for (int j = 0; j <= k; ++j) {
            row_sum[i] += report.confusion(i, j);
            col_sum[j] += report.confusion(i, j);
        }
    }
    report.micro_accuracy = total > 0 ? diag / total : 0.0;

    double weighted_support = 0.0;
    for (int i = 0; i <= k; ++i) {
        ExtractionReportRow row;
        row.label = (i == none) ? "NONE" : spec.name + " " + spec.forms[i];
        row.support = static_cast<std::size_t>(row_sum[i]);
        double tp = report.confusion(i, i);
        row.precision = col_sum[i] > 0 ? tp / col_sum[i] : 0.0;
        row.recall = row_sum[i] > 0 ? tp / row_sum[i] : 0.0;
        row.f1 = (row.precision + row.recall) > 0
                     ? 2.0 * row.precision * row.recall / (row.precision + row.recall)
                     : 0.0;
        report.macro_avg.precision += row.precision;
        report.macro_avg.recall += row.recall;
        report.macro_avg.f1 += row.f1;
        report.weighted_avg.precision += row.precision * row_sum[i];
        report.weighted_avg.recall += row.recall * row_sum[i];
        report.weighted_avg.f1 += row.f1 * row_sum[i];
        weighted_support += row_sum[i];
        report.rows.push_back(std::move(row));
    }
    report.macro_avg.label = "macro avg";
    report.macro_avg.precision /= k + 1;
    report.macro_avg.recall /= k + 1;
    report.macro_avg.f1 /= k + 1;
    report.macro_avg.support = static_cast<std::size_t>(total);
    report.weighted_avg.label = "weighted avg";
    if (weighted_support > 0) {
        report.weighted_avg.precision /= weighted_support;
        report.weighted_avg.recall /= weighted_support;
        report.weighted_avg.f1 /= weighted_support;
    }
    report.weighted_avg.support = static_cast<std::size_t>(total);
    return report;
}

}  // namespace mstk::ms
