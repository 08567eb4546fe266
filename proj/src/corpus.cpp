#include "mstk/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mstk {

const char* to_string(Cefr level) {
    switch (level) {
        case Cefr::A1: return "A1";
        case Cefr::A2: return "A2";
        case Cefr::B1: return "B1";
        case Cefr::B2: return "B2";
        case Cefr::C1: return "C1";
        case Cefr::C2: return "C2";
    }
    return "?";
}

Cefr parse_cefr(const std::string& label) {
    static const std::map<std::string, Cefr> table = {
        {"A1", Cefr::A1}, {"A2", Cefr::A2}, {"B1", Cefr::B1},
        {"B2", Cefr::B2}, {"C1", Cefr::C1}, {"C2", Cefr::C2}};
    auto it = table.find(str::trim(label));
    if (it == table.end()) throw DataError("unknown CEFR label '" + label + "'");
    return it->second;
}

SentenceGraph::SentenceGraph(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    const int n = static_cast<int>(tokens_.size());
    if (n == 0) throw DataError("empty sentence");
    children_.assign(n, {});
    root_ = 0;
    for (const Token& t : tokens_) {
        if (t.index < 1 || t.index > n)
            throw DataError("token index " + std::to_string(t.index) + " out of range");
        if (t.head < 0 || t.head > n)
            throw DataError("sentence '" + text() + "': head " + std::to_string(t.head) +
                            " of token " + std::to_string(t.index) + " out of range");
        if (t.head == t.index)
            throw DataError("sentence '" + text() + "': token " + std::to_string(t.index) +
                            " is its own head");
        if (t.head == 0) {
            if (root_ != 0)
                throw DataError("sentence '" + text() + "': more than one root");
            root_ = t.index;
        } else {
            children_[t.head - 1].push_back(t.index);
        }
    }
    if (root_ == 0) throw DataError("sentence '" + text() + "': no root token");
    // every token must reach the root
    for (const Token& t : tokens_) dependency_depth(*this, t.index);
}

std::string SentenceGraph::text() const {
    std::string out;
    for (const Token& t : tokens_) {
        if (!out.empty()) out += ' ';
        out += t.form;
    }
    return out;
}

int dependency_depth(const SentenceGraph& sentence, int index_1based) {
    int depth = 0;
    int cur = index_1based;
    const int n = static_cast<int>(sentence.size());
    while (sentence.token(cur).head != 0) {
        cur = sentence.token(cur).head;
        if (++depth > n)
            throw DataError("sentence '" + sentence.text() + "': head cycle at token " +
                            std::to_string(index_1based));
    }
    return depth;
}

std::size_t Document::word_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences)
        for (const auto& t : s.tokens())
            if (t.upos != "PUNCT") ++n;
    return n;
}

std::size_t Document::token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
}

namespace {

std::map<std::string, std::string> parse_feats(const std::string& field, int line_no) {
    std::map<std::string, std::string> out;
    if (field == "_" || field.empty()) return out;
    for (const std::string& pair : str::split(field, '|')) {
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": bad FEATS entry '" +
                             pair + "'");
        out[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    return out;
}

struct MetaBlock {
    std::optional<std::string> writing_id;
    std::optional<std::string> cefr;
    std::optional<std::string> nationality;
    std::optional<std::string> topic_id;

    bool any() const { return writing_id || cefr || nationality || topic_id; }
    void clear() { *this = MetaBlock{}; }
};

}  // namespace

std::vector<Document> parse_conllu(std::istream& input) {
    std::vector<Document> docs;
    std::vector<Token> sentence;
    MetaBlock pending;
    std::string line;
    int line_no = 0;

    auto flush_sentence = [&]() {
        if (sentence.empty()) return;
        if (pending.writing_id || docs.empty()) {
            Document doc;
            doc.writing_id =
                pending.writing_id.value_or("doc" + std::to_string(docs.size() + 1));
            doc.cefr = parse_cefr(pending.cefr.value_or("A1"));
            doc.nationality = pending.nationality.value_or("");
            doc.topic_id = pending.topic_id;
            docs.push_back(std::move(doc));
        }
        pending.clear();
        docs.back().sentences.emplace_back(std::move(sentence));
        sentence.clear();
    };

    while (std::getline(input, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush_sentence();
            continue;
        }
        if (line[0] == '#') {
            std::string body = str::trim(line.substr(1));
            auto eq = body.find('=');
            if (eq != std::string::npos) {
                std::string key = str::trim(body.substr(0, eq));
                std::string value = str::trim(body.substr(eq + 1));
                if (key == "writing_id") pending.writing_id = value;
                else if (key == "cefr") pending.cefr = value;
                else if (key == "nationality") pending.nationality = value;
                else if (key == "topic_id") pending.topic_id = value;
            }
            continue;
        }
        std::vector<std::string> cols = str::split(line, '\t');
        if (cols.size() != 10)
            throw ParseError("line " + std::to_string(line_no) + ": expected 10 columns, got " +
                             std::to_string(cols.size()));
        const std::string& id = cols[0];
        if (id.find('-') != std::string::npos) continue;  // multiword-token range
        if (id.find('.') != std::string::npos) continue;  // empty node
        Token t;
        try {
            t.index = std::stoi(id);
            t.head = std::stoi(cols[6]);
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": bad ID or HEAD field");
        }
        t.form = cols[1];
        t.lemma = cols[2];
        t.upos = cols[3];
        t.xpos = cols[4];
        t.feats = parse_feats(cols[5], line_no);
        t.deprel = cols[7];
        if (t.upos.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty UPOS");
        sentence.push_back(std::move(t));
    }
    flush_sentence();
    return docs;
}

std::vector<Document> parse_conllu_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");
    return parse_conllu(in);
}

void serialize_conllu(const std::vector<Document>& docs, std::ostream& out) {
    for (const Document& doc : docs) {
        out << "# writing_id = " << doc.writing_id << "\n";
        out << "# cefr = " << to_string(doc.cefr) << "\n";
        out << "# nationality = " << doc.nationality << "\n";
        if (doc.topic_id) out << "# topic_id = " << *doc.topic_id << "\n";
        for (const SentenceGraph& s : doc.sentences) {
            for (const Token& t : s.tokens()) {
                std::string feats;
                for (const auto& [k, v] : t.feats) {
                    if (!feats.empty()) feats += '|';
                    feats += k + "=" + v;
                }
                if (feats.empty()) feats = "_";
                out << t.index << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << '\t'
                    << (t.xpos.empty() ? "_" : t.xpos) << '\t' << feats << '\t' << t.head
                    << '\t' << t.deprel << '\t' << "_" << '\t' << "_" << "\n";
            }
            out << "\n";
        }
    }
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
    if (docs.empty()) throw DataError("corpus_stats: empty document list");
    CorpusStats stats;
    std::vector<std::vector<double>> counts(kCefrLevels);
    std::vector<double> all;
    for (const Document& d : docs) {
        double w = static_cast<double>(d.word_count());
        counts[ordinal(d.cefr)].push_back(w);
        all.push_back(w);
    }
    auto mean_sd = [](const std::vector<double>& v) {
        if (v.empty()) return std::pair<double, double>{0.0, 0.0};
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>{m, std::sqrt(s / static_cast<double>(v.size()))};
    };
    for (int lv = 0; lv < kCefrLevels; ++lv) {
        CorpusStatsRow row;
        row.level = static_cast<Cefr>(lv);
        row.n_writings = counts[lv].size();
        row.pct_writings = 100.0 * static_cast<double>(counts[lv].size()) /
                           static_cast<double>(docs.size());
        std::tie(row.mean_words, row.sd_words) = mean_sd(counts[lv]);
        stats.rows.push_back(row);
    }
    stats.total_writings = docs.size();
    std::tie(stats.mean_words, stats.sd_words) = mean_sd(all);
    return stats;
}

void write_corpus_stats_csv(const CorpusStats& stats, std::ostream& out) {
    out << "# word counts exclude punctuation tokens; sd is the population value\n";
    out << "level,n,pct,mean_words,sd_words\n";
    for (const CorpusStatsRow& r : stats.rows) {
        out << to_string(r.level) << ',' << r.n_writings << ',' << str::fixed(r.pct_writings, 2)
            << ',' << str::fixed(r.mean_words, 2) << ',' << str::fixed(r.sd_words, 2) << "\n";
    }
    out << "Total," << stats.total_writings << ",100.00," << str::fixed(stats.mean_words, 2)
        << ',' << str::fixed(stats.sd_words, 2) << "\n";
}

}  // namespace mstk
