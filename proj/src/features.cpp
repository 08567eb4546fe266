#include "mstk/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mstk::feat {

namespace {

using SK = ColumnSource::Kind;

Column cat(std::string name, SK kind, int offset = 0, std::string feat = {}) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::Categorical;
    c.source = ColumnSource{kind, offset, std::move(feat)};
    return c;
}

Column numeric(std::string name, SK kind) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::Numeric;
    c.source = ColumnSource{kind, 0, {}};
    return c;
}

std::string offset_tag(int offset) {
    return (offset > 0 ? "+" : "") + std::to_string(offset);
}

void add_pos_windows(FeatureSchema& s, int left, int right) {
    for (int off = -left; off <= -1; ++off) {
        s.columns.push_back(cat("upos@" + offset_tag(off), SK::UposAt, off));
        s.columns.push_back(cat("xpos@" + offset_tag(off), SK::XposAt, off));
    }
    for (int off = 1; off <= right; ++off) {
        s.columns.push_back(cat("upos@" + offset_tag(off), SK::UposAt, off));
        s.columns.push_back(cat("xpos@" + offset_tag(off), SK::XposAt, off));
    }
}

void add_head_pos(FeatureSchema& s, bool xpos_too) {
    s.columns.push_back(cat("head_upos", SK::HeadUpos));
    if (xpos_too) s.columns.push_back(cat("head_xpos", SK::HeadXpos));
}

void add_feat_at(FeatureSchema& s, const char* feat, int offset) {
    s.columns.push_back(cat(std::string("feat:") + feat + "@" + offset_tag(offset), SK::FeatAt,
                            offset, feat));
}

}  // namespace

int FeatureSchema::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

FeatureSchema build_schema(const std::string& ms_name) {
    FeatureSchema s;
    s.ms = ms_name;
    if (ms_name == "PRF") {
        add_pos_windows(s, 3, 5);
        add_head_pos(s, true);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("span_tokens", SK::PatternTokenCount));
        add_feat_at(s, "Number", 1);
        add_feat_at(s, "Person", 1);
        add_feat_at(s, "Mood", 1);
        add_feat_at(s, "Tense", 1);
    } else if (ms_name == "DET") {
        add_pos_windows(s, 5, 5);
        add_head_pos(s, true);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("head_pos", SK::HeadPosition));
        s.columns.push_back(numeric("anchor_pos", SK::AnchorPosition));
        s.columns.push_back(cat("feat:Number@head", SK::HeadFeat, 0, "Number"));
    } else if (ms_name == "DUR") {
        add_pos_windows(s, 5, 5);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("anchor_pos", SK::AnchorPosition));
        add_feat_at(s, "Number", 1);
        add_feat_at(s, "Number", 2);
        add_feat_at(s, "Number", -1);
    } else if (ms_name == "QUANT1") {
        add_pos_windows(s, 5, 5);
        add_head_pos(s, true);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("head_pos", SK::HeadPosition));
        s.columns.push_back(numeric("anchor_pos", SK::AnchorPosition));
        add_feat_at(s, "Number", 1);
        add_feat_at(s, "Number", 2);
        add_feat_at(s, "Number", -1);
    } else if (ms_name == "QUANT2") {
        add_pos_windows(s, 5, 5);
        add_head_pos(s, true);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("head_pos", SK::HeadPosition));
        s.columns.push_back(numeric("anchor_pos", SK::AnchorPosition));
        add_feat_at(s, "Number", 1);
    } else if (ms_name == "MLTNN") {
        add_pos_windows(s, 5, 5);
        add_head_pos(s, false);  // UPOS of the head only
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
    } else if (ms_name == "REL") {
        add_pos_windows(s, 5, 5);
        add_head_pos(s, true);
        s.columns.push_back(cat("deprel", SK::AnchorDeprel));
        s.columns.push_back(numeric("norm_root_dist", SK::NormRootDistance));
        s.columns.push_back(numeric("head_pos", SK::HeadPosition));
        s.columns.push_back(numeric("anchor_pos", SK::AnchorPosition));
        add_feat_at(s, "Mood", 1);
        add_feat_at(s, "VerbForm", 1);
        add_feat_at(s, "Tense", 1);
        s.columns.push_back(cat("feat:Tense@head", SK::HeadFeat, 0, "Tense"));
        add_feat_at(s, "Number", -1);
    } else {
        throw DataError("unknown microsystem '" + ms_name + "'");
    }
    s.columns.push_back(cat("nationality", SK::Nationality));
    return s;
}

std::string Cell::categorical() const {
    switch (tag) {
        case Tag::Text: return text;
        case Tag::Null: return kNull;
        case Tag::Bos: return kBos;
        case Tag::Eos: return kEos;
        case Tag::Number: return str::num(number);
    }
    return kNull;
}

namespace {

Cell text_or_null(const std::string& value) {
    if (value.empty() || value == "_") return Cell::null();
    return Cell::of_text(value);
}

Cell window_cell(const ms::Occurrence& occ, int offset,
                 const std::function<Cell(const Token&)>& project) {
    int pos = occ.anchor_index + offset;
    int n = static_cast<int>(occ.sentence->size());
    if (pos < 1) return Cell::bos();
    if (pos > n) return Cell::eos();
    return project(occ.sentence->token(pos));
}

}  // namespace

FeatureVector extract_features(const FeatureSchema& schema, const ms::Occurrence& occ) {
    if (!occ.sentence || !occ.doc) throw DataError("occurrence has no bound sentence");
    FeatureVector fv;
    fv.occurrence = &occ;
    fv.values.reserve(schema.columns.size());
    const Token& anchor = occ.sentence->token(occ.anchor_index);
    const Token* head =
        anchor.head == 0 ? nullptr : &occ.sentence->token(anchor.head);

    for (const Column& col : schema.columns) {
        const ColumnSource& src = col.source;
        switch (src.kind) {
            case SK::UposAt:
                fv.values.push_back(window_cell(
                    occ, src.offset, [](const Token& t) { return text_or_null(t.upos); }));
                break;
            case SK::XposAt:
                fv.values.push_back(window_cell(
                    occ, src.offset, [](const Token& t) { return text_or_null(t.xpos); }));
                break;
            case SK::HeadUpos:
                fv.values.push_back(head ? text_or_null(head->upos) : Cell::null());
                break;
            case SK::HeadXpos:
                fv.values.push_back(head ? text_or_null(head->xpos) : Cell::null());
                break;
            case SK::AnchorDeprel:
                fv.values.push_back(text_or_null(anchor.deprel));
                break;
            case SK::NormRootDistance:
                fv.values.push_back(Cell::of_number(
                    static_cast<double>(dependency_depth(*occ.sentence, occ.anchor_index)) /
                    static_cast<double>(occ.sentence->size())));
                break;
            case SK::AnchorPosition:
                fv.values.push_back(Cell::of_number(occ.anchor_index));
                break;
            case SK::HeadPosition:
                fv.values.push_back(head ? Cell::of_number(anchor.head) : Cell::null());
                break;
            case SK::PatternTokenCount:
                fv.values.push_back(Cell::of_number(occ.span_length));
                break;
            case SK::FeatAt:
                fv.values.push_back(window_cell(occ, src.offset, [&](const Token& t) {
                    auto v = t.feat(src.feat_name);
                    return v ? Cell::of_text(*v) : Cell::null();
                }));
                break;
            case SK::HeadFeat: {
                if (!head) {
                    fv.values.push_back(Cell::null());
                } else {
                    auto v = head->feat(src.feat_name);
                    fv.values.push_back(v ? Cell::of_text(*v) : Cell::null());
                }
                break;
            }
            case SK::Nationality:
                fv.values.push_back(text_or_null(occ.nationality));
                break;
        }
    }
    return fv;
}

std::vector<FeatureVector> extract_features(const FeatureSchema& schema,
                                            const std::vector<ms::Occurrence>& occs) {
    std::vector<FeatureVector> out;
    out.reserve(occs.size());
    for (const auto& o : occs) out.push_back(extract_features(schema, o));
    return out;
}

FeatureSchema select_features(const FeatureSchema& schema,
                              const std::vector<FeatureVector>& train_vectors,
                              double max_null_rate) {
    if (train_vectors.empty()) throw DataError("select_features: no training vectors");
    const std::size_t n = train_vectors.size();
    FeatureSchema pruned;
    pruned.ms = schema.ms;
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
        std::size_t nulls = 0;
        for (const FeatureVector& fv : train_vectors)
            if (fv.values.at(j).is_missing()) ++nulls;
        double rate = static_cast<double>(nulls) / static_cast<double>(n);
        if (rate <= max_null_rate) pruned.columns.push_back(schema.columns[j]);
    }
    if (pruned.columns.empty())
        throw DataError("select_features dropped every column of " + schema.ms);
    return pruned;
}

DesignMatrix encode(const FeatureSchema& schema, const std::vector<FeatureVector>& vectors,
                    const std::vector<int>& labels, const LevelDictionary* frozen) {
    if (vectors.empty()) throw DataError("encode: no feature vectors");
    if (!labels.empty() && labels.size() != vectors.size())
        throw DataError("encode: label/vector count mismatch");
    for (const FeatureVector& fv : vectors)
        if (fv.values.size() != schema.columns.size())
            throw DataError("encode: vector length does not match schema");

    const std::size_t n = vectors.size();
    DesignMatrix m;
    m.n = n;
    m.y = labels;

    if (frozen) {
        m.dict = *frozen;
        if (m.dict.codecs.size() != schema.columns.size())
            throw DataError("encode: frozen dictionary does not match schema");
    } else {
        for (std::size_t j = 0; j < schema.columns.size(); ++j) {
            const Column& col = schema.columns[j];
            LevelDictionary::ColumnCodec codec;
            codec.column = col.name;
            codec.categorical = (col.kind == ColumnKind::Categorical);
            if (codec.categorical) {
                std::set<std::string> levels;
                for (const FeatureVector& fv : vectors)
                    levels.insert(fv.values[j].categorical());
                codec.levels.assign(levels.begin(), levels.end());
            } else {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (const FeatureVector& fv : vectors) {
                    if (fv.values[j].tag == Cell::Tag::Number) {
                        sum += fv.values[j].number;
                        ++cnt;
                    }
                }
                codec.mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
                double ss = 0.0;
                for (const FeatureVector& fv : vectors)
                    if (fv.values[j].tag == Cell::Tag::Number)
                        ss += (fv.values[j].number - codec.mean) *
                              (fv.values[j].number - codec.mean);
                codec.sd = cnt ? std::sqrt(ss / static_cast<double>(cnt)) : 0.0;
                if (codec.sd <= 0.0) codec.dropped = true;  // constant column
            }
            m.dict.codecs.push_back(std::move(codec));
        }
    }

    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
        const auto& codec = m.dict.codecs[j];
        if (codec.categorical) {
            for (const std::string& level : codec.levels)
                m.column_names.push_back(codec.column + "=" + level);
            m.column_names.push_back(codec.column + "=" + kOther);
        } else if (!codec.dropped) {
            m.column_names.push_back(codec.column);
        }
    }
    m.column_names.push_back(kIntercept);
    m.p = m.column_names.size();
    m.x.assign(n * m.p, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t out = 0;
        for (std::size_t j = 0; j < schema.columns.size(); ++j) {
            const auto& codec = m.dict.codecs[j];
            const Cell& cell = vectors[i].values[j];
            if (codec.categorical) {
                std::string value = cell.categorical();
                auto it = std::lower_bound(codec.levels.begin(), codec.levels.end(), value);
                std::size_t slot;
                if (it != codec.levels.end() && *it == value)
                    slot = static_cast<std::size_t>(it - codec.levels.begin());
                else
                    slot = codec.levels.size();  // __OTHER__
                m.x[i * m.p + out + slot] = 1.0;
                out += codec.levels.size() + 1;
            } else if (!codec.dropped) {
                // missing numerics impute to the training mean (z = 0)
                double v = (cell.tag == Cell::Tag::Number)
                               ? (cell.number - codec.mean) / codec.sd
                               : 0.0;
                m.x[i * m.p + out] = v;
                ++out;
            }
        }
        m.x[i * m.p + m.p - 1] = 1.0;  // intercept
    }
    m.build_sparsity();
    return m;
}

void DesignMatrix::build_sparsity() {
    nz_cols.clear();
    nz_start.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        nz_start[i] = nz_cols.size();
        for (std::size_t j = 0; j < p; ++j)
            if (x[i * p + j] != 0.0) nz_cols.push_back(static_cast<std::uint32_t>(j));
    }
    nz_start[n] = nz_cols.size();
}

std::string decode_categorical(const DesignMatrix& m, std::size_t row,
                               const std::string& column) {
    std::size_t out = 0;
    for (const auto& codec : m.dict.codecs) {
        if (codec.categorical) {
            if (codec.column == column) {
                for (std::size_t s = 0; s <= codec.levels.size(); ++s) {
                    if (m.at(row, out + s) != 0.0)
                        return s < codec.levels.size() ? codec.levels[s] : kOther;
                }
                throw DataError("decode: no indicator set for " + column);
            }
            out += codec.levels.size() + 1;
        } else if (!codec.dropped) {
            ++out;
        }
    }
    throw DataError("decode: unknown categorical column " + column);
}

std::string LevelDictionary::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : codecs) {
        nlohmann::json e;
        e["column"] = c.column;
        e["categorical"] = c.categorical;
        if (c.categorical) {
            e["levels"] = c.levels;
        } else {
            e["mean"] = c.mean;
            e["sd"] = c.sd;
            e["dropped"] = c.dropped;
        }
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

LevelDictionary LevelDictionary::from_json(const std::string& text) {
    LevelDictionary dict;
    nlohmann::json j = nlohmann::json::parse(text);
    for (const auto& e : j) {
        ColumnCodec c;
        c.column = e.at("column").get<std::string>();
        c.categorical = e.at("categorical").get<bool>();
        if (c.categorical) {
            c.levels = e.at("levels").get<std::vector<std::string>>();
        } else {
            c.mean = e.at("mean").get<double>();
            c.sd = e.at("sd").get<double>();
            c.dropped = e.at("dropped").get<bool>();
        }
        dict.codecs.push_back(std::move(c));
    }
    return dict;
}

void write_features_csv(const FeatureSchema& schema,
                        const std::vector<FeatureVector>& vectors, std::ostream& out) {
    out << "ms,form";
    for (const Column& c : schema.columns) out << ',' << csv::escape(c.name);
    out << "\n";
    for (const FeatureVector& fv : vectors) {
        out << fv.occurrence->ms << ',' << fv.occurrence->form;
        for (const Cell& cell : fv.values) {
            if (cell.tag == Cell::Tag::Number)
                out << ',' << str::num(cell.number);
            else
                out << ',' << csv::escape(cell.categorical());
        }
        out << "\n";
    }
}

}  // namespace mstk::feat
