#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mstk/corpus.hpp"
#include "mstk/query.hpp"
#include "mstk/util.hpp"

namespace mstk::ms {

// One microsystem: a closed set of forms competing for a single linguistic
// function, each form recognized by a compiled graph pattern. Form order is
// fixed and defines the class indices used by the models (1..K).
struct MicrosystemSpec {
    std::string name;                               // PRF, DET, MLTNN, DUR, QUANT1, QUANT2, REL
    std::vector<std::string> forms;                 // ordered, K = forms.size()
    std::map<std::string, query::Pattern> patterns; // one per form
    std::string function;                           // prose description

    int k() const { return static_cast<int>(forms.size()); }
    int form_index(const std::string& form) const;  // 1-based; throws on unknown form
};

// The DSL text the built-in patterns are compiled from (embedded copy of
// data/microsystems.msq).
const std::string& builtin_pattern_dsl();

// The seven built-in microsystems.
std::vector<MicrosystemSpec> builtin_microsystems();

// Builds microsystem specs from custom pattern DSL text. Pattern names must
// be MS.FORM for the built-in microsystem/form inventory.
std::vector<MicrosystemSpec> load_microsystems(const std::string& dsl_text);

const MicrosystemSpec& find_microsystem(const std::vector<MicrosystemSpec>& specs,
                                        const std::string& name);

// One extracted slot: the gold form label plus everything feature extraction
// needs. sentence/doc point into the parsed corpus and stay valid while it
// lives.
struct Occurrence {
    std::string ms;
    std::string form;
    int form_index = 0;  // 1-based class index within the microsystem
    std::string writing_id;
    Cefr cefr = Cefr::A1;
    std::string nationality;
    std::string topic;    // empty when the document has none
    int sentence_no = 0;  // 1-based within the document
    int anchor_index = 0; // 1-based token index
    int span_length = 1;  // token span of the defining match
    const SentenceGraph* sentence = nullptr;
    const Document* doc = nullptr;
};

// A site matched by two forms of the same microsystem; the site is dropped
// from the extraction output and reported here instead.
struct OverlapRecord {
    std::string writing_id;
    int sentence_no = 0;
    int anchor_index = 0;
    std::vector<std::string> forms;
};

struct Extraction {
    std::vector<Occurrence> occurrences;
    std::vector<OverlapRecord> overlaps;
};

Extraction extract_occurrences(const MicrosystemSpec& spec,
                               const std::vector<Document>& docs);

// TSV persistence: ms, form, writing_id, cefr, nationality, topic, sent,
// idx, span. Reading re-binds occurrences to the documents by writing_id.
void write_occurrences_tsv(const std::vector<Occurrence>& occurrences, std::ostream& out);
std::vector<Occurrence> read_occurrences_tsv(std::istream& in,
                                             const std::vector<Document>& docs,
                                             const std::vector<MicrosystemSpec>& specs);

// One gold-standard judgment: the annotation is a form label or "none".
struct GoldSite {
    std::string writing_id;
    int sentence_no = 0;
    int anchor_index = 0;
    std::string ms;
    std::string annotation;
};

std::vector<GoldSite> read_gold_csv(std::istream& in);

struct ExtractionReportRow {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

// Per-form precision/recall/F1 against a gold standard, with NONE as a
// first-class label so false positives are accounted for.
struct ExtractionReport {
    std::string ms;
    std::vector<std::string> labels;  // forms in spec order, then NONE
    num::Matrix confusion;            // (K+1)x(K+1), gold rows x predicted columns
    std::vector<ExtractionReportRow> rows;
    double micro_accuracy = 0.0;
    ExtractionReportRow macro_avg;
    ExtractionReportRow weighted_avg;
};

// predicted must all belong to one microsystem; gold must cover every
// predicted site (anything the extractor found outside the gold universe is
// an alignment error).
ExtractionReport evaluate_extraction(const MicrosystemSpec& spec,
                                     const std::vector<Occurrence>& predicted,
                                     const std::vector<GoldSite>& gold);

}  // namespace mstk::ms
