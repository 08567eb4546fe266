#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mstk/features.hpp"

using namespace mstk;
using namespace mstk::feat;

namespace {

// ten-token sentence; anchor options at the edge and middle
std::vector<Document> ten_token_doc() {
    std::ostringstream ss;
    ss << "# writing_id = w\n# cefr = B1\n# nationality = FR\n";
    // w1 .. w10, all attached to w2 (root) except itself
    for (int i = 1; i <= 10; ++i) {
        ss << i << "\tw" << i << "\tw" << i << "\tNOUN\tNN";
        if (i == 3)
            ss << "\tNumber=Plur";
        else
            ss << "\t_";
        ss << "\t" << (i == 2 ? 0 : 2) << "\t" << (i == 2 ? "root" : "dep") << "\t_\t_\n";
    }
    ss << "\n";
    std::istringstream in(ss.str());
    return parse_conllu(in);
}

ms::Occurrence occ_at(const std::vector<Document>& docs, int idx) {
    ms::Occurrence o;
    o.ms = "PRF";
    o.form = "IT";
    o.form_index = 1;
    o.writing_id = docs[0].writing_id;
    o.cefr = docs[0].cefr;
    o.nationality = docs[0].nationality;
    o.sentence_no = 1;
    o.anchor_index = idx;
    o.span_length = 1;
    o.sentence = &docs[0].sentences[0];
    o.doc = &docs[0];
    return o;
}

FeatureVector fake_vector(const ms::Occurrence& occ, const std::vector<Cell>& cells) {
    FeatureVector fv;
    fv.occurrence = &occ;
    fv.values = cells;
    return fv;
}

}  // namespace

TEST_CASE("proform schema carries the documented columns") {
    FeatureSchema s = build_schema("PRF");
    // left 3-gram and right 5-gram, upos and xpos each
    CHECK(s.column_index("upos@-3") >= 0);
    CHECK(s.column_index("xpos@-1") >= 0);
    CHECK(s.column_index("upos@+5") >= 0);
    CHECK(s.column_index("upos@-4") < 0);
    CHECK(s.column_index("head_upos") >= 0);
    CHECK(s.column_index("head_xpos") >= 0);
    CHECK(s.column_index("deprel") >= 0);
    CHECK(s.column_index("norm_root_dist") >= 0);
    CHECK(s.column_index("span_tokens") >= 0);
    CHECK(s.column_index("feat:Number@+1") >= 0);
    CHECK(s.column_index("feat:Person@+1") >= 0);
    CHECK(s.column_index("feat:Mood@+1") >= 0);
    CHECK(s.column_index("feat:Tense@+1") >= 0);
    CHECK(s.column_index("nationality") >= 0);

    // deterministic construction
    FeatureSchema again = build_schema("PRF");
    REQUIRE(again.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(again.columns[i].name == s.columns[i].name);

    // the anchor's own identity never enters a schema
    for (const char* ms_name : {"PRF", "DET", "MLTNN", "DUR", "QUANT1", "QUANT2", "REL"}) {
        FeatureSchema any = build_schema(ms_name);
        CHECK(any.column_index("lemma") < 0);
        CHECK(any.column_index("form") < 0);
        CHECK(any.column_index("upos@+0") < 0);
        for (const auto& col : any.columns)
            CHECK((col.source.kind != ColumnSource::Kind::UposAt || col.source.offset != 0));
    }
}

TEST_CASE("article schema includes the head number; duration drops head POS") {
    FeatureSchema det = build_schema("DET");
    CHECK(det.column_index("feat:Number@head") >= 0);
    CHECK(det.column_index("upos@-5") >= 0);
    CHECK(det.column_index("head_pos") >= 0);
    CHECK(det.column_index("anchor_pos") >= 0);

    FeatureSchema dur = build_schema("DUR");
    CHECK(dur.column_index("head_upos") < 0);
    CHECK(dur.column_index("feat:Number@-1") >= 0);

    CHECK_THROWS_AS(build_schema("XX"), DataError);
}

TEST_CASE("sentence-initial anchors fill the left window with BOS") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema s = build_schema("PRF");
    FeatureVector fv = extract_features(s, occ);
    for (const char* col : {"upos@-3", "upos@-2", "upos@-1"}) {
        int i = s.column_index(col);
        CHECK(fv.values[static_cast<std::size_t>(i)].tag == Cell::Tag::Bos);
    }
    int right = s.column_index("upos@+1");
    CHECK(fv.values[static_cast<std::size_t>(right)].categorical() == "NOUN");
}

TEST_CASE("norm root distance is depth over sentence length") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 5);  // depth 1, 10 tokens
    FeatureSchema s = build_schema("PRF");
    FeatureVector fv = extract_features(s, occ);
    int i = s.column_index("norm_root_dist");
    CHECK(fv.values[static_cast<std::size_t>(i)].number == doctest::Approx(0.1));
}

TEST_CASE("morphology pass-through and null for absent features") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 2);  // next token w3 has Number=Plur
    FeatureSchema s = build_schema("PRF");
    FeatureVector fv = extract_features(s, occ);
    CHECK(fv.values[static_cast<std::size_t>(s.column_index("feat:Number@+1"))].text == "Plur");
    CHECK(fv.values[static_cast<std::size_t>(s.column_index("feat:Tense@+1"))].is_missing());
    // root anchor: head columns are null
    CHECK(fv.values[static_cast<std::size_t>(s.column_index("head_upos"))].is_missing());
}

TEST_CASE("extraction is total over every anchor position") {
    auto docs = ten_token_doc();
    FeatureSchema s = build_schema("QUANT1");
    for (int idx = 1; idx <= 10; ++idx) {
        FeatureVector fv = extract_features(s, occ_at(docs, idx));
        CHECK(fv.values.size() == s.size());
    }
}

TEST_CASE("select_features drops high-null columns but not boundary columns") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema schema;
    schema.ms = "PRF";
    schema.columns.push_back(
        {"mostly_null", ColumnKind::Categorical, {ColumnSource::Kind::Nationality, 0, ""}});
    schema.columns.push_back(
        {"mostly_bos", ColumnKind::Categorical, {ColumnSource::Kind::UposAt, -1, ""}});
    schema.columns.push_back(
        {"clean", ColumnKind::Categorical, {ColumnSource::Kind::UposAt, 1, ""}});

    std::vector<FeatureVector> vectors;
    for (int i = 0; i < 10; ++i) {
        std::vector<Cell> cells;
        cells.push_back(i < 6 ? Cell::null() : Cell::of_text("x"));  // 60% null
        cells.push_back(i < 6 ? Cell::bos() : Cell::of_text("y"));   // 60% boundary
        cells.push_back(Cell::of_text("z"));
        vectors.push_back(fake_vector(occ, cells));
    }
    FeatureSchema pruned = select_features(schema, vectors);
    CHECK(pruned.column_index("mostly_null") < 0);
    CHECK(pruned.column_index("mostly_bos") >= 0);
    CHECK(pruned.column_index("clean") >= 0);

    // exactly 50% nulls is kept ("more than 50%" drops)
    std::vector<FeatureVector> half;
    for (int i = 0; i < 10; ++i) {
        std::vector<Cell> cells = {i < 5 ? Cell::null() : Cell::of_text("x"),
                                   Cell::of_text("y"), Cell::of_text("z")};
        half.push_back(fake_vector(occ, cells));
    }
    CHECK(select_features(schema, half).column_index("mostly_null") >= 0);

    // monotone: appending fully observed rows never drops a kept column
    auto more = vectors;
    for (int i = 0; i < 20; ++i) {
        std::vector<Cell> cells = {Cell::of_text("x"), Cell::of_text("y"), Cell::of_text("z")};
        more.push_back(fake_vector(occ, cells));
    }
    FeatureSchema pruned2 = select_features(schema, more);
    for (const auto& col : pruned.columns) CHECK(pruned2.column_index(col.name) >= 0);
}

TEST_CASE("dropping every column is a configuration error") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema schema;
    schema.ms = "T";
    schema.columns.push_back(
        {"only", ColumnKind::Categorical, {ColumnSource::Kind::Nationality, 0, ""}});
    std::vector<FeatureVector> vectors;
    for (int i = 0; i < 4; ++i) vectors.push_back(fake_vector(occ, {Cell::null()}));
    CHECK_THROWS_AS(select_features(schema, vectors), DataError);
}

TEST_CASE("one-hot encoding with intercept and frozen-dictionary test mapping") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema schema;
    schema.ms = "T";
    schema.columns.push_back(
        {"cat", ColumnKind::Categorical, {ColumnSource::Kind::Nationality, 0, ""}});

    std::vector<FeatureVector> train;
    for (const char* v : {"a", "b", "a", "b"})
        train.push_back(fake_vector(occ, {Cell::of_text(v)}));
    DesignMatrix m = encode(schema, train, {1, 2, 1, 2});
    // levels a,b plus reserved __OTHER__, plus intercept
    REQUIRE(m.p == 4);
    CHECK(m.column_names[0] == "cat=a");
    CHECK(m.column_names[1] == "cat=b");
    CHECK(m.column_names[2] == std::string("cat=") + kOther);
    CHECK(m.column_names[3] == kIntercept);
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == 0.0);
    CHECK(m.at(0, 3) == 1.0);

    // unseen test level maps to __OTHER__
    std::vector<FeatureVector> test = {fake_vector(occ, {Cell::of_text("c")})};
    DesignMatrix t = encode(schema, test, {1}, &m.dict);
    CHECK(t.p == m.p);
    CHECK(t.at(0, 2) == 1.0);

    // decoding training rows recovers the categorical values
    CHECK(decode_categorical(m, 0, "cat") == "a");
    CHECK(decode_categorical(m, 1, "cat") == "b");
}

TEST_CASE("numeric columns are z-scored with the population sd") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema schema;
    schema.ms = "T";
    schema.columns.push_back(
        {"num", ColumnKind::Numeric, {ColumnSource::Kind::AnchorPosition, 0, ""}});
    std::vector<FeatureVector> train;
    for (double v : {1.0, 2.0, 3.0}) train.push_back(fake_vector(occ, {Cell::of_number(v)}));
    DesignMatrix m = encode(schema, train, {1, 2, 1});
    CHECK(m.at(0, 0) == doctest::Approx(-1.224744871391589));
    CHECK(m.at(1, 0) == doctest::Approx(0.0));
    CHECK(m.at(2, 0) == doctest::Approx(1.224744871391589));

    // constant numerics are dropped rather than emitted as all-zero columns
    std::vector<FeatureVector> constant;
    for (int i = 0; i < 3; ++i) constant.push_back(fake_vector(occ, {Cell::of_number(7.0)}));
    DesignMatrix c = encode(schema, constant, {1, 2, 1});
    CHECK(c.p == 1);  // only the intercept
    CHECK(c.dict.codecs[0].dropped);

    CHECK_THROWS_AS(encode(schema, {}, {}), DataError);
}

TEST_CASE("level dictionary serializes through JSON") {
    auto docs = ten_token_doc();
    auto occ = occ_at(docs, 1);
    FeatureSchema schema;
    schema.ms = "T";
    schema.columns.push_back(
        {"cat", ColumnKind::Categorical, {ColumnSource::Kind::Nationality, 0, ""}});
    schema.columns.push_back(
        {"num", ColumnKind::Numeric, {ColumnSource::Kind::AnchorPosition, 0, ""}});
    std::vector<FeatureVector> train = {
        fake_vector(occ, {Cell::of_text("a"), Cell::of_number(1)}),
        fake_vector(occ, {Cell::of_text("b"), Cell::of_number(3)}),
    };
    DesignMatrix m = encode(schema, train, {1, 2});
    LevelDictionary round = LevelDictionary::from_json(m.dict.to_json());
    REQUIRE(round.codecs.size() == m.dict.codecs.size());
    CHECK(round.codecs[0].levels == m.dict.codecs[0].levels);
    CHECK(round.codecs[1].mean == doctest::Approx(m.dict.codecs[1].mean));
    CHECK(round.codecs[1].sd == doctest::Approx(m.dict.codecs[1].sd));
}
