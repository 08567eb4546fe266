#include "mstk/query.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mstk::query {

namespace {

// ---------------------------------------------------------------- tokenizer

enum class TokKind { Ident, Quoted, Symbol, End };

struct Tok {
    TokKind kind = TokKind::End;
    std::string text;
    int line = 0;
    int col = 0;
};

bool ident_char(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == ':' || c == '.' || c == '$' || c == '@' ||
           c == '\'' || u >= 0x80;
}

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Tok& peek() const { return cur_; }

    Tok next() {
        Tok t = cur_;
        advance();
        return t;
    }

    [[noreturn]] void fail(const std::string& msg, const Tok& at) const {
        throw ParseError("pattern syntax error at " + std::to_string(at.line) + ":" +
                         std::to_string(at.col) + ": " + msg);
    }

private:
    void advance() {
        skip_space();
        cur_ = Tok{};
        cur_.line = line_;
        cur_.col = col_;
        if (pos_ >= src_.size()) {
            cur_.kind = TokKind::End;
            return;
        }
        char c = src_[pos_];
        if (c == '"') {
            step();
            std::string v;
            while (pos_ < src_.size() && src_[pos_] != '"') {
                v += src_[pos_];
                step();
            }
            if (pos_ >= src_.size()) fail("unterminated string", cur_);
            step();
            cur_.kind = TokKind::Quoted;
            cur_.text = v;
            return;
        }
        if (ident_char(c)) {
            std::string v;
            while (pos_ < src_.size() && ident_char(src_[pos_])) {
                v += src_[pos_];
                step();
            }
            cur_.kind = TokKind::Ident;
            cur_.text = v;
            return;
        }
        // symbols; '<<' is one token
        if (c == '<' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '<') {
            cur_.kind = TokKind::Symbol;
            cur_.text = "<<";
            step();
            step();
            return;
        }
        cur_.kind = TokKind::Symbol;
        cur_.text = std::string(1, c);
        step();
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') step();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                step();
            } else {
                break;
            }
        }
    }

    void step() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    Tok cur_;
};

// ------------------------------------------------------------------ parser

Attr parse_attr(const std::string& name, std::string* feat_name, Lexer& lex, const Tok& at) {
    if (name == "lemma") return Attr::Lemma;
    if (name == "upos") return Attr::Upos;
    if (name == "xpos") return Attr::Xpos;
    if (name == "form") return Attr::Form;
    if (name == "deprel") return Attr::Deprel;
    if (str::starts_with(name, "feats.") && name.size() > 6) {
        *feat_name = name.substr(6);
        return Attr::Feat;
    }
    lex.fail("unknown attribute '" + name + "'", at);
}

std::vector<std::string> parse_values(Lexer& lex, bool lowercase) {
    std::vector<std::string> values;
    for (;;) {
        Tok v = lex.next();
        if (v.kind != TokKind::Ident && v.kind != TokKind::Quoted)
            lex.fail("expected a value", v);
        values.push_back(lowercase ? str::lower(v.text) : v.text);
        if (lex.peek().kind == TokKind::Symbol && lex.peek().text == "|") {
            lex.next();
            continue;
        }
        break;
    }
    return values;
}

void expect_symbol(Lexer& lex, const std::string& sym) {
    Tok t = lex.next();
    if (t.kind != TokKind::Symbol || t.text != sym)
        lex.fail("expected '" + sym + "'", t);
}

NodeConstraint parse_node(Lexer& lex) {
    Tok name = lex.next();
    if (name.kind != TokKind::Ident) lex.fail("expected variable name after NODE", name);
    NodeConstraint node;
    node.var = name.text;
    expect_symbol(lex, "[");
    if (lex.peek().kind == TokKind::Symbol && lex.peek().text == "]") {
        lex.next();  // explicitly unconstrained
        expect_symbol(lex, ";");
        return node;
    }
    for (;;) {
        NodeTest test;
        bool negated = false;
        if (lex.peek().kind == TokKind::Symbol && lex.peek().text == "!") {
            lex.next();
            negated = true;
        }
        Tok attr = lex.next();
        if (attr.kind != TokKind::Ident) lex.fail("expected attribute name", attr);
        test.attr = parse_attr(attr.text, &test.feat_name, lex, attr);
        if (lex.peek().kind == TokKind::Symbol && lex.peek().text == "=") {
            if (negated) lex.fail("'!' applies to bare attributes only", attr);
            lex.next();
            test.pred = Predicate::OneOf;
            test.values = parse_values(lex, test.attr == Attr::Lemma);
        } else {
            test.pred = negated ? Predicate::Absent : Predicate::Exists;
        }
        node.tests.push_back(std::move(test));
        Tok sep = lex.next();
        if (sep.kind == TokKind::Symbol && sep.text == ",") continue;
        if (sep.kind == TokKind::Symbol && sep.text == "]") break;
        lex.fail("expected ',' or ']'", sep);
    }
    expect_symbol(lex, ";");
    return node;
}

EdgeConstraint parse_edge(Lexer& lex, bool negated) {
    EdgeConstraint edge;
    edge.negated = negated;
    Tok head = lex.next();
    if (head.kind != TokKind::Ident) lex.fail("expected head variable", head);
    edge.head_var = head.text;
    expect_symbol(lex, "-");
    expect_symbol(lex, "[");
    if (lex.peek().kind == TokKind::Symbol && lex.peek().text == "*") {
        lex.next();  // wildcard: any relation
    } else {
        edge.rels = parse_values(lex, false);
    }
    expect_symbol(lex, "]");
    expect_symbol(lex, "-");
    expect_symbol(lex, ">");
    Tok dep = lex.next();
    if (dep.kind != TokKind::Ident) lex.fail("expected dependent variable", dep);
    edge.dep_var = dep.text;
    expect_symbol(lex, ";");
    return edge;
}

Precedence parse_order(Lexer& lex) {
    Precedence prec;
    Tok a = lex.next();
    if (a.kind != TokKind::Ident) lex.fail("expected variable in ORDER", a);
    prec.before_var = a.text;
    Tok op = lex.next();
    if (op.kind != TokKind::Symbol || (op.text != "<<" && op.text != "<"))
        lex.fail("expected '<<' or '<' in ORDER", op);
    prec.adjacent = (op.text == "<");
    Tok b = lex.next();
    if (b.kind != TokKind::Ident) lex.fail("expected variable in ORDER", b);
    prec.after_var = b.text;
    expect_symbol(lex, ";");
    return prec;
}

void validate_clause(const PatternClause& clause) {
    std::set<std::string> declared;
    for (const auto& n : clause.nodes) {
        if (!declared.insert(n.var).second)
            throw ParseError("pattern variable '" + n.var + "' declared twice");
    }
    auto check_declared = [&](const std::string& var, const char* where) {
        if (!declared.count(var))
            throw ParseError(std::string("undeclared variable '") + var + "' in " + where);
    };
    for (const auto& e : clause.edges) {
        check_declared(e.head_var, "EDGE");
        check_declared(e.dep_var, "EDGE");
    }
    for (const auto& p : clause.precedence) {
        check_declared(p.before_var, "ORDER");
        check_declared(p.after_var, "ORDER");
    }
    if (clause.anchor.empty()) throw ParseError("pattern has no ANCHOR");
    check_declared(clause.anchor, "ANCHOR");

    std::vector<std::string> positive = clause.positive_vars();
    std::set<std::string> positive_set(positive.begin(), positive.end());
    if (!positive_set.count(clause.anchor))
        throw ParseError("anchor '" + clause.anchor + "' occurs only in negated edges");
    for (const auto& e : clause.edges) {
        if (e.negated && !positive_set.count(e.head_var) && !positive_set.count(e.dep_var))
            throw ParseError("negated edge " + e.head_var + " -> " + e.dep_var +
                             " has no positively bound endpoint");
    }

    // connectivity of positive vars over non-negated edges + precedence
    if (positive.size() > 1) {
        std::map<std::string, int> id;
        for (std::size_t i = 0; i < positive.size(); ++i) id[positive[i]] = static_cast<int>(i);
        std::vector<std::vector<int>> adj(positive.size());
        auto link = [&](const std::string& a, const std::string& b) {
            auto ia = id.find(a), ib = id.find(b);
            if (ia == id.end() || ib == id.end()) return;
            adj[ia->second].push_back(ib->second);
            adj[ib->second].push_back(ia->second);
        };
        for (const auto& e : clause.edges)
            if (!e.negated) link(e.head_var, e.dep_var);
        for (const auto& p : clause.precedence) link(p.before_var, p.after_var);
        std::vector<bool> seen(positive.size(), false);
        std::vector<int> stack{0};
        seen[0] = true;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[v])
                if (!seen[w]) {
                    seen[w] = true;
                    stack.push_back(w);
                }
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            throw ParseError("pattern is disconnected over its bound variables");
    }
}

// '!' prefixes a statement: only '!EDGE' is legal there.
void consume_statement_negation(Lexer& lex, PatternClause& clause) {
    lex.next();  // '!'
    Tok kw = lex.next();
    if (kw.kind != TokKind::Ident || kw.text != "EDGE")
        lex.fail("expected EDGE after '!'", kw);
    clause.edges.push_back(parse_edge(lex, true));
}

PatternClause parse_clause_with_negation(Lexer& lex, bool stop_at_pattern_kw) {
    PatternClause clause;
    for (;;) {
        const Tok& t = lex.peek();
        if (t.kind == TokKind::End) break;
        if (t.kind == TokKind::Symbol && t.text == "!") {
            consume_statement_negation(lex, clause);
            continue;
        }
        if (t.kind != TokKind::Ident) lex.fail("expected a statement keyword", t);
        if (stop_at_pattern_kw && t.text == "PATTERN") break;
        Tok kw = lex.next();
        if (kw.text == "NODE") {
            clause.nodes.push_back(parse_node(lex));
        } else if (kw.text == "EDGE") {
            clause.edges.push_back(parse_edge(lex, false));
        } else if (kw.text == "ORDER") {
            clause.precedence.push_back(parse_order(lex));
        } else if (kw.text == "ANCHOR") {
            Tok v = lex.next();
            if (v.kind != TokKind::Ident) lex.fail("expected variable after ANCHOR", v);
            if (!clause.anchor.empty()) lex.fail("duplicate ANCHOR", v);
            clause.anchor = v.text;
            expect_symbol(lex, ";");
        } else {
            lex.fail("unknown statement '" + kw.text + "'", kw);
        }
    }
    validate_clause(clause);
    return clause;
}

// --------------------------------------------------------------- matching

bool token_passes(const Token& tok, const std::vector<NodeTest>& tests) {
    for (const NodeTest& t : tests) {
        switch (t.attr) {
            case Attr::Feat: {
                auto v = tok.feat(t.feat_name);
                if (t.pred == Predicate::Exists) {
                    if (!v) return false;
                } else if (t.pred == Predicate::Absent) {
                    if (v) return false;
                } else {
                    if (!v) return false;
                    if (std::find(t.values.begin(), t.values.end(), *v) == t.values.end())
                        return false;
                }
                break;
            }
            default: {
                const std::string* field = nullptr;
                switch (t.attr) {
                    case Attr::Lemma: field = &tok.lemma; break;
                    case Attr::Upos: field = &tok.upos; break;
                    case Attr::Xpos: field = &tok.xpos; break;
                    case Attr::Form: field = &tok.form; break;
                    case Attr::Deprel: field = &tok.deprel; break;
                    case Attr::Feat: break;
                }
                bool present = !field->empty() && *field != "_";
                if (t.pred == Predicate::Exists) {
                    if (!present) return false;
                } else if (t.pred == Predicate::Absent) {
                    if (present) return false;
                } else {
                    std::string probe = (t.attr == Attr::Lemma) ? str::lower(*field) : *field;
                    if (std::find(t.values.begin(), t.values.end(), probe) == t.values.end())
                        return false;
                }
                break;
            }
        }
    }
    return true;
}

bool rel_matches(const std::vector<std::string>& rels, const std::string& deprel) {
    if (rels.empty()) return true;
    return std::find(rels.begin(), rels.end(), deprel) != rels.end();
}

struct ClauseMatcher {
    const PatternClause& clause;
    const SentenceGraph& sentence;
    std::vector<std::string> vars;                  // positive vars, declaration order
    std::map<std::string, int> var_id;              // var -> slot
    std::vector<const NodeConstraint*> var_nodes;   // per slot
    std::vector<std::vector<int>> candidates;       // per slot, token indices
    std::vector<int> assignment;                    // per slot, 0 = unassigned

    ClauseMatcher(const PatternClause& c, const SentenceGraph& s) : clause(c), sentence(s) {
        vars = clause.positive_vars();
        for (std::size_t i = 0; i < vars.size(); ++i) {
            var_id[vars[i]] = static_cast<int>(i);
            var_nodes.push_back(clause.find_node(vars[i]));
        }
        candidates.resize(vars.size());
        assignment.assign(vars.size(), 0);
        for (std::size_t i = 0; i < vars.size(); ++i) {
            for (const Token& t : sentence.tokens())
                if (token_passes(t, var_nodes[i]->tests)) candidates[i].push_back(t.index);
        }
    }

    bool arc(int head, int dep, const std::vector<std::string>& rels) const {
        const Token& d = sentence.token(dep);
        return d.head == head && rel_matches(rels, d.deprel);
    }

    bool edge_ok_so_far(const EdgeConstraint& e) const {
        auto ih = var_id.find(e.head_var);
        auto id = var_id.find(e.dep_var);
        int h = (ih != var_id.end()) ? assignment[ih->second] : 0;
        int d = (id != var_id.end()) ? assignment[id->second] : 0;
        if (e.negated) return true;  // checked at the end
        if (h == 0 || d == 0) return true;
        return arc(h, d, e.rels);
    }

    bool precedence_ok_so_far(const Precedence& p) const {
        int a = assignment[var_id.at(p.before_var)];
        int b = assignment[var_id.at(p.after_var)];
        if (a == 0 || b == 0) return true;
        return p.adjacent ? (a + 1 == b) : (a < b);
    }

    // A negated edge holds when no token assignment for its unbound
    // endpoint(s) realizes the arc. Unbound endpoints range over all tokens
    // satisfying their node constraints.
    bool negated_edge_violated(const EdgeConstraint& e) const {
        auto ih = var_id.find(e.head_var);
        auto id = var_id.find(e.dep_var);
        bool head_bound = ih != var_id.end();
        bool dep_bound = id != var_id.end();
        if (head_bound && dep_bound) {
            return arc(assignment[ih->second], assignment[id->second], e.rels);
        }
        if (head_bound) {
            int h = assignment[ih->second];
            const NodeConstraint* dep_node = clause.find_node(e.dep_var);
            for (int c : sentence.children(h)) {
                if (!rel_matches(e.rels, sentence.token(c).deprel)) continue;
                if (token_passes(sentence.token(c), dep_node->tests)) return true;
            }
            return false;
        }
        // dep bound, head existential: the dependent's head is unique
        int d = assignment[id->second];
        const Token& dep_tok = sentence.token(d);
        if (dep_tok.head == 0) return false;
        if (!rel_matches(e.rels, dep_tok.deprel)) return false;
        const NodeConstraint* head_node = clause.find_node(e.head_var);
        return token_passes(sentence.token(dep_tok.head), head_node->tests);
    }

    void search(std::size_t slot, std::vector<Match>& out) {
        if (slot == vars.size()) {
            for (const EdgeConstraint& e : clause.edges)
                if (e.negated && negated_edge_violated(e)) return;
            Match m;
            m.first_index = static_cast<int>(sentence.size()) + 1;
            m.last_index = 0;
            for (std::size_t i = 0; i < vars.size(); ++i) {
                m.bindings.emplace_back(vars[i], assignment[i]);
                m.first_index = std::min(m.first_index, assignment[i]);
                m.last_index = std::max(m.last_index, assignment[i]);
            }
            m.anchor_index = assignment[var_id.at(clause.anchor)];
            out.push_back(std::move(m));
            return;
        }
        for (int tok : candidates[slot]) {
            bool used = false;
            for (std::size_t i = 0; i < slot; ++i)
                if (assignment[i] == tok) used = true;
            if (used) continue;  // injective bindings
            assignment[slot] = tok;
            bool ok = true;
            for (const EdgeConstraint& e : clause.edges)
                if (!edge_ok_so_far(e)) {
                    ok = false;
                    break;
                }
            if (ok)
                for (const Precedence& p : clause.precedence)
                    if (!precedence_ok_so_far(p)) {
                        ok = false;
                        break;
                    }
            if (ok) search(slot + 1, out);
            assignment[slot] = 0;
        }
    }
};

}  // namespace

const NodeConstraint* PatternClause::find_node(const std::string& var) const {
    for (const auto& n : nodes)
        if (n.var == var) return &n;
    return nullptr;
}

bool PatternClause::is_positive_var(const std::string& var) const {
    if (var == anchor) return true;
    for (const auto& e : edges)
        if (!e.negated && (e.head_var == var || e.dep_var == var)) return true;
    for (const auto& p : precedence)
        if (p.before_var == var || p.after_var == var) return true;
    // declared but used in no edge at all -> still a bound node
    bool in_negated = false;
    for (const auto& e : edges)
        if (e.negated && (e.head_var == var || e.dep_var == var)) in_negated = true;
    return !in_negated;
}

std::vector<std::string> PatternClause::positive_vars() const {
    std::vector<std::string> out;
    for (const auto& n : nodes)
        if (is_positive_var(n.var)) out.push_back(n.var);
    return out;
}

Pattern compile_pattern(const std::string& src) {
    Lexer lex(src);
    Pattern p;
    p.clauses.push_back(parse_clause_with_negation(lex, false));
    return p;
}

std::vector<Pattern> parse_pattern_file(const std::string& text) {
    Lexer lex(text);
    std::vector<Pattern> patterns;
    std::map<std::string, std::size_t> by_name;
    while (lex.peek().kind != TokKind::End) {
        Tok kw = lex.next();
        if (kw.kind != TokKind::Ident || kw.text != "PATTERN")
            lex.fail("expected 'PATTERN <name>'", kw);
        Tok name = lex.next();
        if (name.kind != TokKind::Ident) lex.fail("expected pattern name", name);
        PatternClause clause = parse_clause_with_negation(lex, true);
        auto it = by_name.find(name.text);
        if (it == by_name.end()) {
            Pattern p;
            p.name = name.text;
            p.clauses.push_back(std::move(clause));
            by_name[name.text] = patterns.size();
            patterns.push_back(std::move(p));
        } else {
            patterns[it->second].clauses.push_back(std::move(clause));
        }
    }
    return patterns;
}

std::vector<Match> match_sentence(const Pattern& pattern, const SentenceGraph& sentence) {
    std::vector<Match> all;
    for (const PatternClause& clause : pattern.clauses) {
        ClauseMatcher m(clause, sentence);
        m.search(0, all);
    }
    // deduplicate by binding set, order by anchor then bindings
    auto key = [](const Match& m) {
        std::vector<std::pair<std::string, int>> k = m.bindings;
        std::sort(k.begin(), k.end());
        return k;
    };
    std::sort(all.begin(), all.end(), [&](const Match& a, const Match& b) {
        if (a.anchor_index != b.anchor_index) return a.anchor_index < b.anchor_index;
        return key(a) < key(b);
    });
    all.erase(std::unique(all.begin(), all.end(),
                          [&](const Match& a, const Match& b) { return key(a) == key(b); }),
              all.end());
    return all;
}

void match_corpus(const Pattern& pattern, const std::vector<Document>& docs,
                  const std::function<void(const CorpusMatch&)>& sink) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (std::size_t s = 0; s < docs[d].sentences.size(); ++s) {
            for (Match& m : match_sentence(pattern, docs[d].sentences[s])) {
                CorpusMatch cm;
                cm.doc_index = d;
                cm.sentence_index = s;
                cm.match = std::move(m);
                sink(cm);
            }
        }
    }
}

std::vector<CorpusMatch> match_corpus(const Pattern& pattern,
                                      const std::vector<Document>& docs) {
    std::vector<CorpusMatch> out;
    match_corpus(pattern, docs, [&](const CorpusMatch& m) { out.push_back(m); });
    return out;
}

}  // namespace mstk::query
