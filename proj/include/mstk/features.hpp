#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mstk/microsystems.hpp"
#include "mstk/util.hpp"

namespace mstk::feat {

inline constexpr const char* kBos = "__BOS__";
inline constexpr const char* kEos = "__EOS__";
inline constexpr const char* kNull = "__NULL__";
inline constexpr const char* kOther = "__OTHER__";
inline constexpr const char* kIntercept = "__INTERCEPT__";

enum class ColumnKind { Categorical, Numeric };

// What a column is computed from. Offsets are relative to the anchor token.
struct ColumnSource {
    enum class Kind {
        UposAt,
        XposAt,
        HeadUpos,
        HeadXpos,
        AnchorDeprel,
        NormRootDistance,
        AnchorPosition,
        HeadPosition,
        PatternTokenCount,
        FeatAt,    // morphological feature of the token at `offset`
        HeadFeat,  // morphological feature of the anchor's head
        Nationality,
    };
    Kind kind = Kind::UposAt;
    int offset = 0;
    std::string feat_name;
};

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Categorical;
    ColumnSource source;
};

struct FeatureSchema {
    std::string ms;
    std::vector<Column> columns;

    std::size_t size() const { return columns.size(); }
    int column_index(const std::string& name) const;  // -1 when absent
};

// The per-microsystem feature inventories: POS windows (UPOS and XPOS per
// offset), head POS and relation, normalized root distance, positions, the
// microsystem-specific morphology columns, and learner nationality.
FeatureSchema build_schema(const std::string& ms_name);

// One cell of a feature vector. Window positions outside the sentence carry
// the boundary sentinels; inapplicable values carry Null.
struct Cell {
    enum class Tag { Text, Number, Null, Bos, Eos };
    Tag tag = Tag::Null;
    std::string text;
    double number = 0.0;

    static Cell of_text(std::string t) { return {Tag::Text, std::move(t), 0.0}; }
    static Cell of_number(double v) { return {Tag::Number, {}, v}; }
    static Cell null() { return {Tag::Null, {}, 0.0}; }
    static Cell bos() { return {Tag::Bos, {}, 0.0}; }
    static Cell eos() { return {Tag::Eos, {}, 0.0}; }

    bool is_missing() const { return tag == Tag::Null; }
    bool is_boundary() const { return tag == Tag::Bos || tag == Tag::Eos; }
    // Canonical categorical value (sentinels spelled out).
    std::string categorical() const;
};

struct FeatureVector {
    const ms::Occurrence* occurrence = nullptr;
    std::vector<Cell> values;  // aligned with the schema
};

FeatureVector extract_features(const FeatureSchema& schema, const ms::Occurrence& occ);
std::vector<FeatureVector> extract_features(const FeatureSchema& schema,
                                            const std::vector<ms::Occurrence>& occs);

// Drops columns whose Null rate among the training vectors exceeds 0.5.
// Boundary sentinels are not missing values and never count toward the rate.
FeatureSchema select_features(const FeatureSchema& schema,
                              const std::vector<FeatureVector>& train_vectors,
                              double max_null_rate = 0.5);

// Frozen encoding decisions made on the training split: categorical level
// sets (sorted), numeric standardization constants, dropped constants.
struct LevelDictionary {
    struct ColumnCodec {
        std::string column;
        bool categorical = true;
        std::vector<std::string> levels;  // sorted; sentinel levels included
        double mean = 0.0;
        double sd = 1.0;       // population SD of the training values
        bool dropped = false;  // zero-variance numeric column
    };
    std::vector<ColumnCodec> codecs;

    std::string to_json() const;
    static LevelDictionary from_json(const std::string& text);
};

struct DesignMatrix {
    std::size_t n = 0;
    std::size_t p = 0;                      // encoded columns, intercept last
    std::vector<double> x;                  // row-major
    std::vector<int> y;                     // class index 1..K
    std::vector<std::string> column_names;  // "col=level" indicators, numerics, intercept
    LevelDictionary dict;

    // optional CSR index of nonzero columns per row; one-hot rows are
    // mostly zeros and the optimizers skip them when this is populated
    std::vector<std::uint32_t> nz_cols;
    std::vector<std::size_t> nz_start;

    double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
    std::size_t intercept_column() const { return p - 1; }
    bool has_sparsity() const { return nz_start.size() == n + 1; }
    void build_sparsity();
};

// One-hot expands categoricals over the training level sets (an extra
// __OTHER__ indicator absorbs unseen test levels), z-scores numerics with
// training mean/sd, mean-imputes missing numerics, and appends an intercept.
// Pass the training dictionary to encode test data with identical columns.
DesignMatrix encode(const FeatureSchema& schema, const std::vector<FeatureVector>& vectors,
                    const std::vector<int>& labels,
                    const LevelDictionary* frozen = nullptr);

// Recovers the categorical value of a training row from its indicators.
std::string decode_categorical(const DesignMatrix& m, std::size_t row,
                               const std::string& column);

void write_features_csv(const FeatureSchema& schema,
                        const std::vector<FeatureVector>& vectors, std::ostream& out);

}  // namespace mstk::feat
