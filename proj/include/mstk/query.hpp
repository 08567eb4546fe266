#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mstk/corpus.hpp"

namespace mstk::query {

// Attribute a node test inspects. Feat carries the feature name alongside.
enum class Attr { Lemma, Upos, Xpos, Form, Deprel, Feat };

enum class Predicate { OneOf, Exists, Absent };  // equals is a one-element OneOf

struct NodeTest {
    Attr attr = Attr::Lemma;
    std::string feat_name;  // only for Attr::Feat
    Predicate pred = Predicate::OneOf;
    std::vector<std::string> values;  // lowercased for lemma
};

struct NodeConstraint {
    std::string var;
    std::vector<NodeTest> tests;  // empty = explicitly unconstrained
};

struct EdgeConstraint {
    std::string head_var;
    std::string dep_var;
    std::vector<std::string> rels;  // empty = wildcard
    bool negated = false;
};

struct Precedence {
    std::string before_var;
    std::string after_var;
    bool adjacent = false;  // ORDER a < b; otherwise ORDER a << b
};

// One conjunctive clause: nodes, edges, precedence, anchor. Variables that
// occur only in negated edges are existentially quantified inside the
// negation and never appear in bindings.
struct PatternClause {
    std::vector<NodeConstraint> nodes;
    std::vector<EdgeConstraint> edges;
    std::vector<Precedence> precedence;
    std::string anchor;

    const NodeConstraint* find_node(const std::string& var) const;
    bool is_positive_var(const std::string& var) const;
    std::vector<std::string> positive_vars() const;  // declaration order
};

// A compiled query: a union of clauses (usually one). A pattern file may
// stack several blocks under one name; their matches are merged.
struct Pattern {
    std::string name;  // empty for anonymous patterns
    std::vector<PatternClause> clauses;
};

struct Match {
    std::vector<std::pair<std::string, int>> bindings;  // positive vars, declaration order
    int anchor_index = 0;                               // 1-based token index
    int first_index = 0;                                // span of bound tokens
    int last_index = 0;

    int span_length() const { return last_index - first_index + 1; }
};

// Compiles one clause of DSL text:
//   NODE var[attr=val, feats.Name=Val, attr2, !attr3];
//   EDGE head -[rel]-> dep;      !EDGE head -[rel]-> dep;
//   ORDER a << b;                ORDER a < b;   (adjacent)
//   ANCHOR var;
// Values may be bare words or "quoted"; one-of lists use '|'; the edge
// relation may be a label, a 'l1|l2' list, or '*'. Lemma tests are
// case-insensitive, form tests case-sensitive.
Pattern compile_pattern(const std::string& src);

// Parses a pattern file: blocks introduced by 'PATTERN <name>', '#' comments.
// Repeated names accumulate clauses under one Pattern.
std::vector<Pattern> parse_pattern_file(const std::string& text);

// All matches of the pattern in the sentence: injective assignments of the
// positive variables satisfying every constraint, deduplicated by binding
// set, ordered by anchor index (ties by binding indices).
std::vector<Match> match_sentence(const Pattern& pattern, const SentenceGraph& sentence);

struct CorpusMatch {
    std::size_t doc_index = 0;
    std::size_t sentence_index = 0;  // 0-based within document
    Match match;
};

void match_corpus(const Pattern& pattern, const std::vector<Document>& docs,
                  const std::function<void(const CorpusMatch&)>& sink);
std::vector<CorpusMatch> match_corpus(const Pattern& pattern,
                                      const std::vector<Document>& docs);

}  // namespace mstk::query
