#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mstk/util.hpp"

namespace mstk {

// CEFR proficiency scale, ordered A1 < A2 < B1 < B2 < C1 < C2.
enum class Cefr { A1, A2, B1, B2, C1, C2 };

constexpr int kCefrLevels = 6;

const char* to_string(Cefr level);
Cefr parse_cefr(const std::string& label);  // throws DataError on unknown labels
inline int ordinal(Cefr level) { return static_cast<int>(level); }

// One syntactic token of a CoNLL-U sentence. Multiword-token ranges and
// empty nodes never appear here; only real tree nodes do.
struct Token {
    int index = 0;  // 1-based position in sentence
    std::string form;
    std::string lemma;
    std::string upos;
    std::string xpos;
    std::map<std::string, std::string> feats;
    int head = 0;  // 0 = root
    std::string deprel;

    std::optional<std::string> feat(const std::string& name) const {
        auto it = feats.find(name);
        if (it == feats.end()) return std::nullopt;
        return it->second;
    }
};

// A sentence with its dependency tree. Validated on construction:
// exactly one root, heads in range, no cycles.
class SentenceGraph {
public:
    SentenceGraph() = default;
    explicit SentenceGraph(std::vector<Token> tokens);

    const std::vector<Token>& tokens() const { return tokens_; }
    std::size_t size() const { return tokens_.size(); }
    const Token& token(int index_1based) const { return tokens_.at(index_1based - 1); }
    int root_index() const { return root_; }

    // 1-based indices of the dependents of the given token.
    const std::vector<int>& children(int head_1based) const {
        return children_.at(head_1based - 1);
    }

    std::string text() const;  // space-joined surface forms

private:
    std::vector<Token> tokens_;
    std::vector<std::vector<int>> children_;
    int root_ = 0;
};

// Number of head hops from the token to the root; 0 for the root itself.
int dependency_depth(const SentenceGraph& sentence, int index_1based);

struct Document {
    std::string writing_id;
    Cefr cefr = Cefr::A1;
    std::string nationality;
    std::optional<std::string> topic_id;
    std::vector<SentenceGraph> sentences;

    // Word total used in descriptive statistics. Punctuation tokens
    // (upos PUNCT) are not counted; the stats CSV header records this.
    std::size_t word_count() const;
    std::size_t token_count() const;
};

struct CorpusStatsRow {
    Cefr level;
    std::size_t n_writings = 0;
    double pct_writings = 0.0;
    double mean_words = 0.0;
    double sd_words = 0.0;  // population SD
};

struct CorpusStats {
    std::vector<CorpusStatsRow> rows;  // one per CEFR level, in scale order
    std::size_t total_writings = 0;
    double mean_words = 0.0;
    double sd_words = 0.0;
};

// Parses a CoNLL-U stream. Document metadata travels in comment lines
// (# writing_id = ..., # cefr = ..., # nationality = ..., # topic_id = ...)
// preceding the document's first sentence; a new writing_id starts a new
// document. Multiword-token ranges are skipped (their parts kept), empty
// nodes are dropped.
std::vector<Document> parse_conllu(std::istream& input);
std::vector<Document> parse_conllu_file(const std::string& path);

// Inverse of parse_conllu, up to comment formatting.
void serialize_conllu(const std::vector<Document>& docs, std::ostream& out);

CorpusStats corpus_stats(const std::vector<Document>& docs);

// CSV with header level,n,pct,mean_words,sd_words plus a Total row.
void write_corpus_stats_csv(const CorpusStats& stats, std::ostream& out);

}  // namespace mstk
