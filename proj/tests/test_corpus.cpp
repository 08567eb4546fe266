#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "mstk/corpus.hpp"

using namespace mstk;

namespace {

const char* kMini =
    "# writing_id = w1\n"
    "# cefr = A1\n"
    "# nationality = FR\n"
    "1\tMany\tmany\tADJ\tJJ\tDegree=Pos\t2\tamod\t_\t_\n"
    "2\tstudents\tstudent\tNOUN\tNNS\tNumber=Plur\t3\tnsubj\t_\t_\n"
    "3\trest\trest\tVERB\tVBP\t_\t0\troot\t_\t_\n"
    "4\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_\n"
    "\n"
    "# writing_id = w2\n"
    "# cefr = B2\n"
    "# nationality = DE\n"
    "# topic_id = T9\n"
    "1\tIt\tit\tPRON\tPRP\tPronType=Prs\t2\tnsubj\t_\t_\n"
    "2\tworks\twork\tVERB\tVBZ\t_\t0\troot\t_\t_\n"
    "\n";

std::vector<Document> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_conllu(in);
}

Document make_doc(const std::string& id, int words) {
    Document d;
    d.writing_id = id;
    d.cefr = Cefr::A1;
    std::vector<Token> tokens;
    for (int i = 1; i <= words; ++i) {
        Token t;
        t.index = i;
        t.form = "w";
        t.lemma = "w";
        t.upos = "NOUN";
        t.head = i == 1 ? 0 : 1;
        t.deprel = i == 1 ? "root" : "dep";
        tokens.push_back(t);
    }
    d.sentences = {SentenceGraph(tokens)};
    return d;
}

}  // namespace

TEST_CASE("parses a minimal well-formed document") {
    auto docs = parse(
        "# writing_id = d\n# cefr = A1\n# nationality = X\n"
        "1\tMany\tmany\tADJ\tJJ\t_\t2\tamod\t_\t_\n"
        "2\tstudents\tstudent\tNOUN\tNNS\t_\t3\tnsubj\t_\t_\n"
        "3\trest\trest\tVERB\tVBP\t_\t0\troot\t_\t_\n"
        "4\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_\n\n");
    REQUIRE(docs.size() == 1);
    REQUIRE(docs[0].sentences.size() == 1);
    const auto& s = docs[0].sentences[0];
    CHECK(s.size() == 4);
    CHECK(s.root_index() == 3);
    CHECK(s.token(2).feats.empty());
}

TEST_CASE("metadata pass-through across documents") {
    auto docs = parse(kMini);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].cefr == Cefr::A1);
    CHECK(docs[1].cefr == Cefr::B2);
    CHECK(docs[0].nationality == "FR");
    CHECK(!docs[0].topic_id.has_value());
    CHECK(docs[1].topic_id.value() == "T9");
}

TEST_CASE("column count errors cite the line") {
    try {
        parse("1\tx\tx\tX\tX\t_\t0\troot\t_\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        CHECK(std::string(e.what()).find("9") != std::string::npos);
    }
}

TEST_CASE("head out of range names the sentence") {
    CHECK_THROWS_AS(parse("1\thi\thi\tINTJ\tUH\t_\t7\troot\t_\t_\n\n"), DataError);
}

TEST_CASE("unknown cefr label is a metadata error") {
    CHECK_THROWS_AS(parse("# writing_id = w\n# cefr = Z9\n"
                          "1\thi\thi\tINTJ\tUH\t_\t0\troot\t_\t_\n\n"),
                    DataError);
}

TEST_CASE("multiword ranges are skipped, empty nodes dropped") {
    auto docs = parse(
        "# writing_id = d\n# cefr = A1\n"
        "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
        "1\tdo\tdo\tAUX\tVBP\t_\t3\taux\t_\t_\n"
        "2\tn't\tnot\tPART\tRB\t_\t3\tadvmod\t_\t_\n"
        "2.1\tghost\tghost\tNOUN\tNN\t_\t_\t_\t_\t_\n"
        "3\tgo\tgo\tVERB\tVB\t_\t0\troot\t_\t_\n\n");
    CHECK(docs[0].sentences[0].size() == 3);
}

TEST_CASE("cycles and multiple roots are rejected") {
    CHECK_THROWS(parse("1\ta\ta\tX\tX\t_\t2\tdep\t_\t_\n"
                       "2\tb\tb\tX\tX\t_\t1\tdep\t_\t_\n\n"));
    CHECK_THROWS(parse("1\ta\ta\tX\tX\t_\t0\troot\t_\t_\n"
                       "2\tb\tb\tX\tX\t_\t0\troot\t_\t_\n\n"));
}

TEST_CASE("dependency depth walks head links") {
    // chain a -> b -> c -> root
    auto docs = parse(
        "# writing_id = d\n# cefr = A1\n"
        "1\ta\ta\tX\tX\t_\t2\tdep\t_\t_\n"
        "2\tb\tb\tX\tX\t_\t3\tdep\t_\t_\n"
        "3\tc\tc\tX\tX\t_\t4\tdep\t_\t_\n"
        "4\troot\troot\tX\tX\t_\t0\troot\t_\t_\n\n");
    const auto& s = docs[0].sentences[0];
    CHECK(dependency_depth(s, 4) == 0);
    CHECK(dependency_depth(s, 3) == 1);
    CHECK(dependency_depth(s, 1) == 3);
}

TEST_CASE("round-trip serialize/parse preserves structure") {
    auto docs = parse(kMini);
    std::ostringstream out;
    serialize_conllu(docs, out);
    auto again = parse(out.str());
    REQUIRE(again.size() == docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        CHECK(again[d].writing_id == docs[d].writing_id);
        CHECK(again[d].cefr == docs[d].cefr);
        CHECK(again[d].topic_id == docs[d].topic_id);
        REQUIRE(again[d].sentences.size() == docs[d].sentences.size());
        for (std::size_t s = 0; s < docs[d].sentences.size(); ++s) {
            const auto& a = docs[d].sentences[s].tokens();
            const auto& b = again[d].sentences[s].tokens();
            REQUIRE(a.size() == b.size());
            for (std::size_t t = 0; t < a.size(); ++t) {
                CHECK(a[t].form == b[t].form);
                CHECK(a[t].lemma == b[t].lemma);
                CHECK(a[t].upos == b[t].upos);
                CHECK(a[t].xpos == b[t].xpos);
                CHECK(a[t].feats == b[t].feats);
                CHECK(a[t].head == b[t].head);
                CHECK(a[t].deprel == b[t].deprel);
            }
        }
    }
}

TEST_CASE("random valid trees pass the graph checks") {
    std::mt19937_64 eng(42);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(eng() % 12);
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i + 1;
        std::shuffle(perm.begin(), perm.end(), eng);
        std::vector<int> head_of(n + 1, 0);
        for (int i = 1; i < n; ++i)
            head_of[perm[i]] = perm[eng() % i];  // attach to an earlier node: acyclic
        std::vector<Token> tokens;
        for (int idx = 1; idx <= n; ++idx) {
            Token t;
            t.index = idx;
            t.form = "w" + std::to_string(idx);
            t.lemma = t.form;
            t.upos = "X";
            t.head = head_of[idx];
            t.deprel = t.head == 0 ? "root" : "dep";
            tokens.push_back(t);
        }
        SentenceGraph g(tokens);
        int roots = 0;
        for (const Token& t : g.tokens()) {
            if (t.head == 0) ++roots;
            CHECK(dependency_depth(g, t.index) >= 0);
        }
        CHECK(roots == 1);
    }
}

TEST_CASE("corpus stats match the two-point example") {
    auto stats = corpus_stats({make_doc("a", 10), make_doc("b", 20)});
    const auto& a1 = stats.rows[0];
    CHECK(a1.n_writings == 2);
    CHECK(a1.pct_writings == doctest::Approx(100.0));
    CHECK(a1.mean_words == doctest::Approx(15.0));
    CHECK(a1.sd_words == doctest::Approx(5.0));  // population SD

    auto single = corpus_stats({make_doc("a", 10)});
    CHECK(single.rows[0].sd_words == doctest::Approx(0.0));

    CHECK_THROWS_AS(corpus_stats({}), DataError);
}

TEST_CASE("stats percentages sum to 100 and punctuation is not counted") {
    auto docs = parse(kMini);
    CHECK(docs[0].word_count() == 3);  // final period excluded
    CHECK(docs[0].token_count() == 4);
    auto stats = corpus_stats(docs);
    double pct = 0.0;
    for (const auto& row : stats.rows) pct += row.pct_writings;
    CHECK(pct == doctest::Approx(100.0).epsilon(1e-4));

    // zero-document levels are reported with n = 0
    CHECK(stats.rows.size() == 6);
    CHECK(stats.rows[ordinal(Cefr::C2)].n_writings == 0);
}

TEST_CASE("percentages sum to 100 for arbitrary level mixes") {
    std::mt19937_64 eng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Document> docs;
        int n = 1 + static_cast<int>(eng() % 40);
        for (int i = 0; i < n; ++i) {
            Document d = make_doc("d" + std::to_string(i), 1 + static_cast<int>(eng() % 50));
            d.cefr = static_cast<Cefr>(eng() % 6);
            docs.push_back(std::move(d));
        }
        auto stats = corpus_stats(docs);
        double pct = 0.0;
        for (const auto& row : stats.rows) {
            pct += row.pct_writings;
            CHECK(row.sd_words >= 0.0);
        }
        CHECK(std::fabs(pct - 100.0) < 0.01);
    }
}
