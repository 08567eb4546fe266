#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "mstk/microsystems.hpp"
#include "mstk/synthetic.hpp"

using namespace mstk;
using namespace mstk::ms;

namespace {

std::vector<Document> gold_mini() {
    return parse_conllu_file(std::string(MSTK_DATA_DIR) + "/gold_mini.conllu");
}

std::vector<GoldSite> gold_annotations() {
    std::ifstream in(std::string(MSTK_DATA_DIR) + "/gold_mini_gold.csv");
    REQUIRE(in.good());
    return read_gold_csv(in);
}

const Occurrence* find_site(const std::vector<Occurrence>& occs, const std::string& wid,
                            int sent, int idx) {
    for (const auto& o : occs)
        if (o.writing_id == wid && o.sentence_no == sent && o.anchor_index == idx) return &o;
    return nullptr;
}

}  // namespace

TEST_CASE("seven built-in microsystems with the documented form inventories") {
    auto specs = builtin_microsystems();
    REQUIRE(specs.size() == 7);
    const auto& prf = find_microsystem(specs, "PRF");
    CHECK(prf.k() == 3);
    CHECK(prf.forms == std::vector<std::string>{"IT", "THIS", "THAT"});
    CHECK(find_microsystem(specs, "QUANT2").k() == 2);
    CHECK(find_microsystem(specs, "DET").forms ==
          std::vector<std::string>{"A", "THE", "ZERO"});

    // the zero article is implemented via negated dependency edges
    const auto& zero = find_microsystem(specs, "DET").patterns.at("ZERO");
    int negated = 0;
    for (const auto& e : zero.clauses[0].edges)
        if (e.negated) ++negated;
    CHECK(negated >= 2);

    CHECK_THROWS_AS(find_microsystem(specs, "NOPE"), DataError);
}

TEST_CASE("table-style sentence yields proform and article occurrences") {
    auto docs = gold_mini();
    auto specs = builtin_microsystems();
    // g01 sentence 1: "The student cares for this ."
    auto prf = extract_occurrences(find_microsystem(specs, "PRF"), docs);
    const Occurrence* this_occ = find_site(prf.occurrences, "g01", 1, 5);
    REQUIRE(this_occ != nullptr);
    CHECK(this_occ->form == "THIS");
    CHECK(this_occ->form_index == 2);
    CHECK(this_occ->cefr == Cefr::B1);
    CHECK(this_occ->nationality == "FR");
    CHECK(this_occ->topic == "T1");

    auto det = extract_occurrences(find_microsystem(specs, "DET"), docs);
    const Occurrence* the_occ = find_site(det.occurrences, "g01", 1, 1);
    REQUIRE(the_occ != nullptr);
    CHECK(the_occ->form == "THE");

    // that "for" is not a duration site
    auto dur = extract_occurrences(find_microsystem(specs, "DUR"), docs);
    CHECK(find_site(dur.occurrences, "g01", 1, 4) == nullptr);
}

TEST_CASE("multinoun anchors the last word of the construction") {
    auto docs = gold_mini();
    auto specs = builtin_microsystems();
    auto mltnn = extract_occurrences(find_microsystem(specs, "MLTNN"), docs);
    // "She took a student loan ." anchors at "loan"
    const Occurrence* o = find_site(mltnn.occurrences, "g01", 2, 5);
    REQUIRE(o != nullptr);
    CHECK(o->form == "N2N1");
    CHECK(o->span_length == 2);
    // "The car of the university" anchors at "university"
    const Occurrence* of_occ = find_site(mltnn.occurrences, "g03", 11, 5);
    REQUIRE(of_occ != nullptr);
    CHECK(of_occ->form == "N1OFN2");
}

TEST_CASE("relativizer WHO requires the relative-clause attachment") {
    auto docs = gold_mini();
    auto specs = builtin_microsystems();
    auto rel = extract_occurrences(find_microsystem(specs, "REL"), docs);
    CHECK(find_site(rel.occurrences, "g01", 8, 3) != nullptr);   // the students who study
    CHECK(find_site(rel.occurrences, "g03", 2, 1) == nullptr);   // Who came ... ?
    CHECK(find_site(rel.occurrences, "g03", 3, 4) == nullptr);   // meet who you like
}

TEST_CASE("empty corpus extracts nothing") {
    auto specs = builtin_microsystems();
    auto ex = extract_occurrences(find_microsystem(specs, "PRF"), {});
    CHECK(ex.occurrences.empty());
    CHECK(ex.overlaps.empty());
}

TEST_CASE("forms partition matches on the gold corpus and synthetic sentences") {
    auto check_partition = [](const std::vector<Document>& docs) {
        for (const auto& spec : builtin_microsystems()) {
            auto ex = extract_occurrences(spec, docs);
            CHECK(ex.overlaps.empty());
            std::set<std::tuple<std::string, int, int>> seen;
            for (const auto& o : ex.occurrences) {
                auto key = std::make_tuple(o.writing_id, o.sentence_no, o.anchor_index);
                CHECK(seen.insert(key).second);
            }
        }
    };
    check_partition(gold_mini());

    synth::SyntheticConfig cfg;
    cfg.n_texts = 60;
    cfg.seed = 424242;
    check_partition(synth::generate(cfg).docs);
}

TEST_CASE("overlapping forms are reported and the site dropped") {
    // a custom spec where two forms share the anchor
    std::string dsl =
        "PATTERN PRF.IT\nNODE a[upos=NOUN];\nANCHOR a;\n"
        "PATTERN PRF.THIS\nNODE a[upos=NOUN, feats.Number=Plur];\nANCHOR a;\n"
        "PATTERN PRF.THAT\nNODE a[upos=VERB];\nANCHOR a;\n"
        "PATTERN DET.A\nNODE a[lemma=a];\nANCHOR a;\nPATTERN DET.THE\nNODE a[lemma=the];\nANCHOR a;\n"
        "PATTERN DET.ZERO\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN MLTNN.N2N1\nNODE a[lemma=zz];\nANCHOR a;\nPATTERN MLTNN.N1OFN2\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN MLTNN.N2SN1\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN DUR.FOR\nNODE a[lemma=zz];\nANCHOR a;\nPATTERN DUR.SINCE\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN DUR.DURING\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN QUANT1.ANY\nNODE a[lemma=zz];\nANCHOR a;\nPATTERN QUANT1.SOME\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN QUANT2.MANY\nNODE a[lemma=zz];\nANCHOR a;\nPATTERN QUANT2.MUCH\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN REL.THAT\nNODE a[lemma=zz];\nANCHOR a;\nPATTERN REL.WHICH\nNODE a[lemma=zz];\nANCHOR a;\n"
        "PATTERN REL.WHO\nNODE a[lemma=zz];\nANCHOR a;\n";
    auto specs = load_microsystems(dsl);
    std::istringstream in(
        "# writing_id = w\n# cefr = A1\n"
        "1\tdogs\tdog\tNOUN\tNNS\tNumber=Plur\t0\troot\t_\t_\n\n");
    auto docs = parse_conllu(in);
    auto ex = extract_occurrences(find_microsystem(specs, "PRF"), docs);
    CHECK(ex.occurrences.empty());
    REQUIRE(ex.overlaps.size() == 1);
    CHECK(ex.overlaps[0].forms == std::vector<std::string>{"IT", "THIS"});
}

TEST_CASE("occurrence TSV round-trips against the corpus") {
    auto docs = gold_mini();
    auto specs = builtin_microsystems();
    std::vector<Occurrence> all;
    for (const auto& spec : specs) {
        auto ex = extract_occurrences(spec, docs);
        all.insert(all.end(), ex.occurrences.begin(), ex.occurrences.end());
    }
    std::ostringstream out;
    write_occurrences_tsv(all, out);
    std::istringstream in(out.str());
    auto loaded = read_occurrences_tsv(in, docs, specs);
    REQUIRE(loaded.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(loaded[i].ms == all[i].ms);
        CHECK(loaded[i].form == all[i].form);
        CHECK(loaded[i].form_index == all[i].form_index);
        CHECK(loaded[i].writing_id == all[i].writing_id);
        CHECK(loaded[i].anchor_index == all[i].anchor_index);
        CHECK(loaded[i].span_length == all[i].span_length);
        CHECK(loaded[i].sentence != nullptr);
    }
}

TEST_CASE("extraction on the gold mini-corpus is perfect for every form") {
    auto docs = gold_mini();
    auto specs = builtin_microsystems();
    auto gold = gold_annotations();
    for (const auto& spec : specs) {
        auto ex = extract_occurrences(spec, docs);
        auto report = evaluate_extraction(spec, ex.occurrences, gold);
        for (const auto& row : report.rows) {
            if (row.support == 0) continue;
            INFO(spec.name, " ", row.label);
            CHECK(row.precision == doctest::Approx(1.0));
            CHECK(row.recall == doctest::Approx(1.0));
            CHECK(row.f1 == doctest::Approx(1.0));
        }
        CHECK(report.micro_accuracy == doctest::Approx(1.0));
    }
}

TEST_CASE("evaluation arithmetic matches the hand-counted confusion") {
    // gold=IT,pred=IT: 40; gold=IT,pred=NONE: 10; gold=NONE,pred=IT: 0
    auto specs = builtin_microsystems();
    const auto& prf = find_microsystem(specs, "PRF");
    std::vector<GoldSite> gold;
    std::vector<Occurrence> predicted;
    auto add = [&](int i, const std::string& annotation, bool extracted) {
        GoldSite g{"w", 1, i, "PRF", annotation};
        gold.push_back(g);
        if (extracted) {
            Occurrence o;
            o.ms = "PRF";
            o.form = "IT";
            o.form_index = 1;
            o.writing_id = "w";
            o.sentence_no = 1;
            o.anchor_index = i;
            predicted.push_back(o);
        }
    };
    int site = 1;
    for (int i = 0; i < 40; ++i) add(site++, "IT", true);
    for (int i = 0; i < 10; ++i) add(site++, "IT", false);
    auto report = evaluate_extraction(prf, predicted, gold);
    const auto& it_row = report.rows[0];
    CHECK(it_row.label == "PRF IT");
    CHECK(it_row.recall == doctest::Approx(0.8));
    CHECK(it_row.precision == doctest::Approx(1.0));
    CHECK(it_row.f1 == doctest::Approx(8.0 / 9.0));
    CHECK(it_row.support == 50);

    // micro accuracy equals trace/total
    double trace = 0.0, total = 0.0;
    for (int i = 0; i < prf.k() + 1; ++i)
        for (int j = 0; j < prf.k() + 1; ++j) {
            total += report.confusion(i, j);
            if (i == j) trace += report.confusion(i, j);
        }
    CHECK(report.micro_accuracy == doctest::Approx(trace / total));

    // weighted F1 lies between min and max per-class F1 (over supported rows)
    double lo = 1.0, hi = 0.0;
    for (const auto& row : report.rows) {
        if (row.support == 0) continue;
        lo = std::min(lo, row.f1);
        hi = std::max(hi, row.f1);
    }
    CHECK(report.weighted_avg.f1 >= lo - 1e-12);
    CHECK(report.weighted_avg.f1 <= hi + 1e-12);
}

TEST_CASE("extracted site outside the gold universe is an alignment error") {
    auto specs = builtin_microsystems();
    const auto& prf = find_microsystem(specs, "PRF");
    Occurrence o;
    o.ms = "PRF";
    o.form = "IT";
    o.form_index = 1;
    o.writing_id = "w";
    o.sentence_no = 1;
    o.anchor_index = 3;
    std::vector<GoldSite> gold = {{"w", 1, 1, "PRF", "IT"}};
    CHECK_THROWS_AS(evaluate_extraction(prf, {o}, gold), DataError);
}
