// mstk: corpus-to-statistics toolkit for microsystem analysis of learner
// writings. Subcommands cover the full pipeline: descriptive stats,
// pattern extraction, form-choice model training, prediction, evaluation,
// proficiency association, and annotation agreement.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "mstk/corpus.hpp"
#include "mstk/features.hpp"
#include "mstk/microsystems.hpp"
#include "mstk/model.hpp"
#include "mstk/query.hpp"
#include "mstk/reports.hpp"
#include "mstk/stats.hpp"
#include "mstk/synthetic.hpp"
#include "mstk/util.hpp"

namespace fs = std::filesystem;
using namespace mstk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitConvergence = 4;

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<ms::MicrosystemSpec> load_specs(const std::string& patterns_path) {
    if (patterns_path.empty()) return ms::builtin_microsystems();
    return ms::load_microsystems(read_file(patterns_path));
}

// Unknown microsystem names are usage errors; list the valid ones.
int check_ms_names(const std::vector<std::string>& requested,
                   const std::vector<ms::MicrosystemSpec>& specs) {
    for (const std::string& name : requested) {
        bool known = false;
        for (const auto& s : specs)
            if (s.name == name) known = true;
        if (!known) {
            std::string names;
            for (const auto& s : specs) {
                if (!names.empty()) names += ", ";
                names += s.name;
            }
            std::cerr << "error: unknown microsystem '" << name << "'; expected one of "
                      << names << "\n";
            return kExitUsage;
        }
    }
    return kExitOk;
}

std::vector<std::string> select_ms(const std::vector<std::string>& requested,
                                   const std::vector<ms::MicrosystemSpec>& specs) {
    if (requested.empty()) {
        std::vector<std::string> all;
        for (const auto& s : specs) all.push_back(s.name);
        return all;
    }
    return requested;
}

// Rebuilds the post-selection schema a model was trained with from its
// level dictionary.
feat::FeatureSchema schema_from_dict(const std::string& ms_name,
                                     const feat::LevelDictionary& dict) {
    feat::FeatureSchema full = feat::build_schema(ms_name);
    feat::FeatureSchema pruned;
    pruned.ms = ms_name;
    for (const auto& codec : dict.codecs) {
        int idx = full.column_index(codec.column);
        if (idx < 0)
            throw DataError("model dictionary references unknown column '" + codec.column +
                            "'");
        pruned.columns.push_back(full.columns[static_cast<std::size_t>(idx)]);
    }
    return pruned;
}

// ------------------------------------------------------------- subcommands

int cmd_stats(const std::string& corpus_path, const std::string& out_dir) {
    auto docs = parse_conllu_file(corpus_path);
    auto stats = corpus_stats(docs);
    auto out = open_out(fs::path(out_dir) / "corpus_stats.csv");
    write_corpus_stats_csv(stats, out);
    std::cout << "corpus_stats.csv written for " << docs.size() << " documents\n";
    return kExitOk;
}

int cmd_extract(const std::string& corpus_path, const std::vector<std::string>& ms_names,
                const std::string& gold_path, const std::string& patterns_path,
                const std::string& out_dir, bool dump_matches) {
    auto specs = load_specs(patterns_path);
    if (int rc = check_ms_names(ms_names, specs)) return rc;
    auto docs = parse_conllu_file(corpus_path);

    std::ofstream match_dump;
    if (dump_matches) {
        match_dump = open_out(fs::path(out_dir) / "matches.tsv");
        match_dump << "writing_id\tsent_no\tanchor_index\tpattern_name\tbound_vars\n";
    }

    std::vector<ms::Occurrence> all;
    std::vector<ms::OverlapRecord> overlaps;
    for (const std::string& name : select_ms(ms_names, specs)) {
        const auto& spec = ms::find_microsystem(specs, name);
        if (dump_matches) {
            for (const std::string& form : spec.forms) {
                query::match_corpus(
                    spec.patterns.at(form), docs, [&](const query::CorpusMatch& cm) {
                        match_dump << docs[cm.doc_index].writing_id << '\t'
                                   << cm.sentence_index + 1 << '\t'
                                   << cm.match.anchor_index << '\t' << name << '.' << form
                                   << '\t';
                        for (std::size_t b = 0; b < cm.match.bindings.size(); ++b) {
                            if (b) match_dump << '|';
                            match_dump << cm.match.bindings[b].first << '='
                                       << cm.match.bindings[b].second;
                        }
                        match_dump << "\n";
                    });
            }
        }
        ms::Extraction ex = ms::extract_occurrences(spec, docs);
        std::cout << name << ": " << ex.occurrences.size() << " occurrences, "
                  << ex.overlaps.size() << " overlapping sites dropped\n";
        all.insert(all.end(), ex.occurrences.begin(), ex.occurrences.end());
        overlaps.insert(overlaps.end(), ex.overlaps.begin(), ex.overlaps.end());
    }
    {
        auto out = open_out(fs::path(out_dir) / "occurrences.tsv");
        ms::write_occurrences_tsv(all, out);
    }
    if (!overlaps.empty()) {
        auto out = open_out(fs::path(out_dir) / "overlaps.tsv");
        out << "writing_id\tsent\tidx\tforms\n";
        for (const auto& o : overlaps) {
            out << o.writing_id << '\t' << o.sentence_no << '\t' << o.anchor_index << '\t';
            for (std::size_t i = 0; i < o.forms.size(); ++i)
                out << (i ? "|" : "") << o.forms[i];
            out << "\n";
        }
    }
    if (!gold_path.empty()) {
        std::ifstream in(gold_path);
        if (!in) throw DataError("cannot open gold file '" + gold_path + "'");
        auto gold = ms::read_gold_csv(in);
        for (const std::string& name : select_ms(ms_names, specs)) {
            bool any = false;
            for (const auto& g : gold)
                if (g.ms == name) any = true;
            if (!any) continue;
            const auto& spec = ms::find_microsystem(specs, name);
            std::vector<ms::Occurrence> mine;
            for (const auto& o : all)
                if (o.ms == name) mine.push_back(o);
            auto report = ms::evaluate_extraction(spec, mine, gold);
            auto out = open_out(fs::path(out_dir) / ("extraction_" + name + ".csv"));
            reports::write_extraction_report(report, out);
        }
    }
    return kExitOk;
}

int cmd_train(const std::string& corpus_path, const std::string& occurrences_path,
              const std::vector<std::string>& ms_names, const std::string& patterns_path,
              const std::string& out_dir, std::uint64_t seed, double test_fraction,
              double l2, double tol, int max_iter, bool dump_features) {
    auto specs = load_specs(patterns_path);
    if (int rc = check_ms_names(ms_names, specs)) return rc;
    auto docs = parse_conllu_file(corpus_path);
    std::ifstream occ_in(occurrences_path);
    if (!occ_in) throw DataError("cannot open occurrences '" + occurrences_path + "'");
    auto occurrences = ms::read_occurrences_tsv(occ_in, docs, specs);

    bool any_unconverged = false;
    for (const std::string& name : select_ms(ms_names, specs)) {
        const auto& spec = ms::find_microsystem(specs, name);
        std::vector<ms::Occurrence> mine;
        for (const auto& o : occurrences)
            if (o.ms == name) mine.push_back(o);
        if (mine.empty()) {
            std::cout << name << ": no occurrences, skipped\n";
            continue;
        }
        auto [train_occ, test_occ] =
            model::stratified_split(mine, test_fraction, rng::derive_seed(seed, "split-" + name));
        for (const std::string& form : spec.forms) {
            bool present = false;
            for (const auto& o : train_occ)
                if (o.form == form) present = true;
            if (!present)
                throw DataError("form " + name + "." + form + " is absent from training");
        }
        auto balanced =
            model::balanced_subsample(train_occ, rng::derive_seed(seed, "subsample-" + name));

        feat::FeatureSchema schema = feat::build_schema(name);
        auto train_vectors = feat::extract_features(schema, balanced);
        feat::FeatureSchema selected = feat::select_features(schema, train_vectors);
        if (selected.size() != schema.size())
            train_vectors = feat::extract_features(selected, balanced);
        std::vector<int> labels;
        for (const auto& o : balanced) labels.push_back(o.form_index);
        feat::DesignMatrix x = feat::encode(selected, train_vectors, labels);
        if (dump_features) {
            auto feats_out = open_out(fs::path(out_dir) / ("features_" + name + ".csv"));
            feat::write_features_csv(selected, train_vectors, feats_out);
        }

        model::TrainConfig cfg;
        cfg.l2_penalty = l2;
        cfg.tolerance = tol;
        cfg.max_iterations = max_iter;
        cfg.seed = rng::derive_seed(seed, "train-" + name);
        model::MultinomialModel m = model::train_multinomial(x, cfg, spec.forms);
        m.ms = name;

        std::map<std::string, std::size_t> counts;
        for (const auto& o : balanced) ++counts[o.form];
        std::cout << name << ": trained on " << balanced.size() << " occurrences (";
        bool first = true;
        for (const auto& [form, count] : counts) {
            std::cout << (first ? "" : ", ") << form << "=" << count;
            first = false;
        }
        std::cout << "), " << x.p << " encoded columns, "
                  << (m.converged ? "converged" : "NOT CONVERGED") << " after "
                  << m.iterations << " iterations";
        if (m.separation_warning) std::cout << " [separation warning]";
        if (m.underdetermined_warning) std::cout << " [n <= encoded columns]";
        std::cout << "\n";
        if (!m.converged) any_unconverged = true;

        auto model_out = open_out(fs::path(out_dir) / ("model_" + name + ".json"));
        model_out << m.to_json() << "\n";
        auto test_out = open_out(fs::path(out_dir) / ("test_" + name + ".tsv"));
        ms::write_occurrences_tsv(test_occ, test_out);
    }
    return any_unconverged ? kExitConvergence : kExitOk;
}

int cmd_predict(const std::string& corpus_path, const std::string& occurrences_path,
                const std::string& model_path, const std::string& patterns_path,
                const std::string& out_path) {
    auto specs = load_specs(patterns_path);
    auto docs = parse_conllu_file(corpus_path);
    model::MultinomialModel m = model::MultinomialModel::from_json(read_file(model_path));
    std::ifstream occ_in(occurrences_path);
    if (!occ_in) throw DataError("cannot open occurrences '" + occurrences_path + "'");
    auto occurrences = ms::read_occurrences_tsv(occ_in, docs, specs);
    std::vector<ms::Occurrence> mine;
    for (const auto& o : occurrences)
        if (o.ms == m.ms) mine.push_back(o);
    if (mine.empty()) throw DataError("no occurrences for microsystem " + m.ms);

    feat::FeatureSchema schema = schema_from_dict(m.ms, m.dict);
    auto vectors = feat::extract_features(schema, mine);
    std::vector<int> labels;
    for (const auto& o : mine) labels.push_back(o.form_index);
    feat::DesignMatrix x = feat::encode(schema, vectors, labels, &m.dict);
    auto preds = model::predict_proba(m, x, &mine);

    auto out = open_out(out_path);
    reports::write_predictions(preds, m.class_labels, out);
    std::cout << m.ms << ": " << preds.size() << " predictions written\n";
    return kExitOk;
}

struct BoundPredictions {
    std::vector<ms::Occurrence> occurrences;  // stable storage for refs
    std::vector<model::PredictedDistribution> preds;
};

// Reads prediction CSVs and rebinds them to occurrences loaded from the TSV.
BoundPredictions load_predictions(const std::vector<std::string>& prediction_paths,
                                  const std::vector<Document>& docs,
                                  const std::string& occurrences_path,
                                  const std::vector<ms::MicrosystemSpec>& specs) {
    BoundPredictions bp;
    std::ifstream occ_in(occurrences_path);
    if (!occ_in) throw DataError("cannot open occurrences '" + occurrences_path + "'");
    bp.occurrences = ms::read_occurrences_tsv(occ_in, docs, specs);

    // group occurrences per microsystem so site keys stay unambiguous
    std::map<std::string, std::vector<ms::Occurrence>> by_ms;
    for (const auto& o : bp.occurrences) by_ms[o.ms].push_back(o);

    for (const std::string& path : prediction_paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open predictions '" + path + "'");
        // find the microsystem by probing the header labels against specs
        std::string header;
        std::getline(in, header);
        auto cols = csv::parse_line(header);
        std::vector<std::string> labels;
        for (const auto& c : cols)
            if (str::starts_with(c, "p_")) labels.push_back(c.substr(2));
        const ms::MicrosystemSpec* found = nullptr;
        for (const auto& spec : specs)
            if (spec.forms == labels) found = &spec;
        if (!found)
            throw DataError("predictions '" + path + "' match no known microsystem");
        in.seekg(0);
        auto& occ_list = by_ms[found->name];
        auto preds = reports::read_predictions(in, occ_list);
        bp.preds.insert(bp.preds.end(), preds.begin(), preds.end());
    }
    // re-point occurrence refs into stable storage
    std::map<std::tuple<std::string, std::string, int, int>, const ms::Occurrence*> stable;
    for (const auto& o : bp.occurrences)
        stable[{o.ms, o.writing_id, o.sentence_no, o.anchor_index}] = &o;
    for (auto& pd : bp.preds)
        pd.occurrence = stable.at(
            {pd.ms, pd.occurrence->writing_id, pd.occurrence->sentence_no,
             pd.occurrence->anchor_index});
    return bp;
}

int cmd_evaluate(const std::string& corpus_path, const std::string& occurrences_path,
                 const std::vector<std::string>& prediction_paths,
                 const std::vector<std::string>& model_paths,
                 const std::string& patterns_path, const std::string& out_dir) {
    auto specs = load_specs(patterns_path);
    auto docs = parse_conllu_file(corpus_path);
    BoundPredictions bp = load_predictions(prediction_paths, docs, occurrences_path, specs);

    std::map<std::string, std::vector<const model::PredictedDistribution*>> by_ms;
    for (const auto& pd : bp.preds) by_ms[pd.ms].push_back(&pd);

    std::vector<reports::ClassificationRow> rows;
    for (const auto& [name, preds] : by_ms) {
        const auto& spec = ms::find_microsystem(specs, name);
        std::vector<int> predicted, gold;
        for (const auto* pd : preds) {
            predicted.push_back(pd->argmax_index);
            gold.push_back(pd->gold_index);
        }
        rows.push_back({name, model::classification_report(predicted, gold, spec.forms)});
    }
    auto out = open_out(fs::path(out_dir) / "classification.csv");
    reports::write_classification_report(rows, out);

    for (const std::string& model_path : model_paths) {
        model::MultinomialModel m = model::MultinomialModel::from_json(read_file(model_path));
        auto entries = model::feature_importance(m);
        auto imp_out = open_out(fs::path(out_dir) / ("importance_" + m.ms + ".csv"));
        reports::write_importance_report(entries, imp_out);
    }
    std::cout << "classification report for " << rows.size() << " microsystems written\n";
    return kExitOk;
}

int cmd_associate(const std::string& corpus_path, const std::string& occurrences_path,
                  const std::vector<std::string>& prediction_paths,
                  const std::string& patterns_path, const std::string& out_dir,
                  std::uint64_t seed, int lasso_folds) {
    auto specs = load_specs(patterns_path);
    auto docs = parse_conllu_file(corpus_path);
    BoundPredictions bp = load_predictions(prediction_paths, docs, occurrences_path, specs);

    auto profiles = stats::aggregate_text_median(bp.preds);
    {
        auto out = open_out(fs::path(out_dir) / "profiles.csv");
        reports::write_profiles(profiles, specs, out);
    }

    std::set<std::string> ms_present;
    for (const auto& pd : bp.preds) ms_present.insert(pd.ms);

    // Kruskal-Wallis of per-text medians across CEFR levels, per form
    {
        auto out = open_out(fs::path(out_dir) / "kruskal_wallis.csv");
        out << "ms,form,n_texts,H,df,p_value\n";
        for (const auto& name : ms_present) {
            const auto& spec = ms::find_microsystem(specs, name);
            for (std::size_t f = 0; f < spec.forms.size(); ++f) {
                std::map<int, std::vector<double>> by_level;
                for (const auto& tp : profiles)
                    if (tp.has(name)) by_level[ordinal(tp.cefr)].push_back(tp.medians.at(name)[f]);
                std::vector<std::vector<double>> groups;
                std::size_t n_texts = 0;
                for (auto& [lv, values] : by_level) {
                    n_texts += values.size();
                    groups.push_back(std::move(values));
                }
                if (groups.size() < 2) continue;
                auto kw = stats::kruskal_wallis(groups);
                out << name << ',' << spec.forms[f] << ',' << n_texts << ','
                    << str::fixed(kw.h, 4) << ',' << kw.df << ','
                    << str::fixed(kw.p_value, 6) << "\n";
            }
        }
    }

    // Per-form single-covariate ordinal fits, with and without L1
    std::vector<reports::OddsRatioRow> or_rows;
    {
        auto l1_out = open_out(fs::path(out_dir) / "l1_comparison.csv");
        l1_out << "ms,form,odds_ratio,odds_ratio_with_l1,moved\n";
        for (const auto& name : ms_present) {
            const auto& spec = ms::find_microsystem(specs, name);
            for (const auto& form : spec.forms) {
                std::string covariate = name + "." + form;
                auto cmp = stats::refit_with_confounder(profiles, {covariate}, specs);
                or_rows.push_back({name, form, cmp.without_confounder.entries[0]});
                l1_out << name << ',' << form << ','
                       << str::fixed(cmp.without_confounder.entries[0].odds_ratio, 3) << ','
                       << str::fixed(cmp.with_confounder.entries[0].odds_ratio, 3) << ','
                       << (cmp.moved.empty() ? 0 : 1) << "\n";
            }
        }
    }
    {
        auto out = open_out(fs::path(out_dir) / "odds_ratios.csv");
        reports::write_odds_ratio_report(or_rows, out);
    }

    // Per-microsystem pseudo R2 from an ordinal fit on K-1 form medians
    {
        auto out = open_out(fs::path(out_dir) / "pseudo_r2.csv");
        out << "ms,pseudo_r2,n_texts\n";
        for (const auto& name : ms_present) {
            const auto& spec = ms::find_microsystem(specs, name);
            std::vector<std::string> covs;
            for (std::size_t f = 0; f + 1 < spec.forms.size(); ++f)
                covs.push_back(name + "." + spec.forms[f]);
            auto data = stats::make_ordinal_data(profiles, covs, specs, false);
            auto m = stats::fit_ordinal(data);
            out << name << ',' << str::fixed(m.pseudo_r2(), 4) << ',' << m.n_used << "\n";
        }
    }

    // Combined LASSO over all microsystem medians
    if (ms_present.size() >= 2) {
        std::vector<std::string> lasso_cols;
        for (const auto& name : ms_present) {
            const auto& spec = ms::find_microsystem(specs, name);
            for (const auto& form : spec.forms) lasso_cols.push_back(name + "." + form);
        }
        feat::DesignMatrix x;
        std::vector<std::string> level_labels;
        {
            std::set<int> levels;
            std::vector<const stats::TextProfile*> complete;
            for (const auto& tp : profiles) {
                bool ok = true;
                for (const auto& name : ms_present)
                    if (!tp.has(name)) ok = false;
                if (!ok) continue;
                complete.push_back(&tp);
                levels.insert(ordinal(tp.cefr));
            }
            if (complete.size() < 10)
                throw DataError("too few texts with all microsystems for the combined model");
            std::map<int, int> rank;
            for (int lv : levels) {
                rank[lv] = static_cast<int>(level_labels.size()) + 1;
                level_labels.push_back(to_string(static_cast<Cefr>(lv)));
            }
            x.n = complete.size();
            x.p = lasso_cols.size() + 1;
            x.column_names = lasso_cols;
            x.column_names.push_back(feat::kIntercept);
            x.x.assign(x.n * x.p, 0.0);
            for (std::size_t i = 0; i < complete.size(); ++i) {
                std::size_t j = 0;
                for (const auto& name : ms_present) {
                    const auto& spec = ms::find_microsystem(specs, name);
                    const auto& med = complete[i]->medians.at(name);
                    for (std::size_t f = 0; f < spec.forms.size(); ++f)
                        x.x[i * x.p + j++] = med[f];
                }
                x.x[i * x.p + x.p - 1] = 1.0;
                x.y.push_back(rank.at(ordinal(complete[i]->cefr)));
            }
        }
        auto lasso = model::train_lasso_multinomial(x, level_labels, {}, lasso_folds,
                                                    rng::derive_seed(seed, "lasso"));
        auto out = open_out(fs::path(out_dir) / "combined_lasso.csv");
        out << "pseudo_r2,chosen_penalty,nonzero_coefficients,loglik,loglik_null,n_texts\n";
        out << str::fixed(lasso.pseudo_r2, 4) << ',' << str::num(lasso.chosen_penalty) << ','
            << lasso.nonzero_coefficients << ',' << str::fixed(lasso.loglik, 4) << ','
            << str::fixed(lasso.loglik_null, 4) << ',' << x.n << "\n";
    }

    // Figure-style data: normalized form frequency per topic x CEFR
    for (const auto& name : ms_present) {
        const auto& spec = ms::find_microsystem(specs, name);
        std::vector<ms::Occurrence> mine;
        for (const auto& o : bp.occurrences)
            if (o.ms == name) mine.push_back(o);
        auto rows = stats::normalized_form_frequency(docs, spec, mine);
        auto out = open_out(fs::path(out_dir) / ("frequency_" + name + ".csv"));
        reports::write_frequency_report(rows, out);
    }

    std::cout << "association reports written for " << ms_present.size()
              << " microsystems over " << profiles.size() << " texts\n";
    return kExitOk;
}

int cmd_agreement(const std::string& annotations_path, const std::string& out_dir,
                  int n_perm, std::uint64_t seed) {
    std::ifstream in(annotations_path);
    if (!in) throw DataError("cannot open annotations '" + annotations_path + "'");

    // long format: ms,item,rater,label[,sample]
    struct Row {
        std::string ms, item, rater, label, sample;
    };
    std::vector<Row> rows;
    std::string line;
    bool header = true;
    int i_ms = -1, i_item = -1, i_rater = -1, i_label = -1, i_sample = -1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (str::trim(line).empty()) continue;
        auto cols = csv::parse_line(line);
        if (header) {
            header = false;
            for (int c = 0; c < static_cast<int>(cols.size()); ++c) {
                std::string name = str::lower(str::trim(cols[c]));
                if (name == "ms") i_ms = c;
                else if (name == "item") i_item = c;
                else if (name == "rater") i_rater = c;
                else if (name == "label" || name == "annotation") i_label = c;
                else if (name == "sample") i_sample = c;
            }
            if (i_item < 0 || i_rater < 0 || i_label < 0)
                throw DataError("annotations need item, rater and label columns");
            continue;
        }
        Row r;
        r.ms = i_ms >= 0 ? cols.at(i_ms) : "ALL";
        r.item = cols.at(i_item);
        r.rater = cols.at(i_rater);
        r.label = cols.at(i_label);
        r.sample = i_sample >= 0 ? cols.at(i_sample) : "1";
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw DataError("no annotation rows");

    std::set<std::string> raters;
    for (const auto& r : rows) raters.insert(r.rater);
    std::vector<std::string> rater_list(raters.begin(), raters.end());

    // per microsystem: item -> rater -> label (per sample)
    std::map<std::string, std::map<std::string, std::map<std::string, std::string>>> grid;
    std::map<std::string, std::set<std::string>> samples_by_item;
    std::map<std::string, std::string> sample_of_item;
    for (const auto& r : rows) {
        grid[r.ms][r.item][r.rater] = r.label;
        sample_of_item[r.ms + "\t" + r.item] = r.sample;
    }

    std::vector<reports::FleissRow> fleiss_rows;
    std::vector<reports::PairwiseRow> pairwise_rows;
    for (const auto& [ms_name, items] : grid) {
        // items fully rated by every rater enter the Fleiss table
        std::set<std::string> categories;
        std::vector<const std::map<std::string, std::string>*> complete;
        for (const auto& [item, ratings] : items) {
            if (ratings.size() != rater_list.size()) continue;
            complete.push_back(&ratings);
            for (const auto& [rater, label] : ratings) categories.insert(label);
        }
        if (complete.empty()) continue;
        std::vector<std::string> cat_list(categories.begin(), categories.end());
        std::vector<std::vector<int>> table;
        for (const auto* ratings : complete) {
            std::vector<int> row(cat_list.size(), 0);
            for (const auto& [rater, label] : *ratings) {
                auto it = std::find(cat_list.begin(), cat_list.end(), label);
                row[static_cast<std::size_t>(it - cat_list.begin())] += 1;
            }
            table.push_back(std::move(row));
        }
        fleiss_rows.push_back(
            {ms_name, stats::fleiss_kappa(table, static_cast<int>(rater_list.size()))});
    }

    // pairwise Cohen over everything, plus permutation tests when two
    // samples are present
    {
        std::map<std::string, std::vector<std::vector<std::string>>> by_sample;
        for (const auto& [ms_name, items] : grid) {
            for (const auto& [item, ratings] : items) {
                if (ratings.size() != rater_list.size()) continue;
                std::vector<std::string> labels;
                for (const auto& rater : rater_list) labels.push_back(ratings.at(rater));
                by_sample[sample_of_item.at(ms_name + "\t" + item)].push_back(
                    std::move(labels));
            }
        }
        std::vector<std::vector<std::string>> all_items;
        for (const auto& [sample, items] : by_sample)
            all_items.insert(all_items.end(), items.begin(), items.end());

        std::map<std::pair<std::string, std::string>, double> perm_p;
        if (by_sample.size() == 2) {
            auto it = by_sample.begin();
            stats::RaterSample s1{rater_list, it->second};
            ++it;
            stats::RaterSample s2{rater_list, it->second};
            for (const auto& pr : stats::permutation_test_kappa(s1, s2, n_perm, seed))
                perm_p[{pr.rater_a, pr.rater_b}] = pr.p_value;
        }
        for (std::size_t a = 0; a < rater_list.size(); ++a) {
            for (std::size_t b = a + 1; b < rater_list.size(); ++b) {
                std::vector<std::string> va, vb;
                for (const auto& item : all_items) {
                    va.push_back(item[a]);
                    vb.push_back(item[b]);
                }
                reports::PairwiseRow row;
                row.rater_a = rater_list[a];
                row.rater_b = rater_list[b];
                row.result = stats::cohen_kappa(va, vb);
                auto it = perm_p.find({row.rater_a, row.rater_b});
                if (it != perm_p.end()) row.permutation_p = it->second;
                pairwise_rows.push_back(std::move(row));
            }
        }
    }

    {
        auto out = open_out(fs::path(out_dir) / "agreement_fleiss.csv");
        reports::write_fleiss_report(fleiss_rows, out);
    }
    {
        auto out = open_out(fs::path(out_dir) / "agreement_pairwise.csv");
        reports::write_pairwise_report(pairwise_rows, out);
    }
    std::cout << "agreement reports written (" << fleiss_rows.size() << " microsystems, "
              << pairwise_rows.size() << " rater pairs)\n";
    return kExitOk;
}

int cmd_gen_synthetic(std::size_t n_texts, std::uint64_t seed, const std::string& out_dir) {
    synth::SyntheticConfig cfg;
    cfg.n_texts = n_texts;
    cfg.seed = seed;
    auto corpus = synth::generate(cfg);
    {
        auto out = open_out(fs::path(out_dir) / "corpus.conllu");
        serialize_conllu(corpus.docs, out);
    }
    {
        auto out = open_out(fs::path(out_dir) / "truth_sites.tsv");
        synth::write_truth_sites(corpus.truth, out);
    }
    {
        auto out = open_out(fs::path(out_dir) / "truth_texts.tsv");
        synth::write_truth_texts(corpus.truth, out);
    }
    {
        auto out = open_out(fs::path(out_dir) / "truth_model.json");
        synth::write_truth_model(corpus.truth, out);
    }
    std::cout << "synthetic corpus: " << corpus.docs.size() << " texts, "
              << corpus.truth.sites.size() << " sites, generating pseudo_r2 "
              << str::fixed(corpus.truth.pseudo_r2, 4) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mstk: microsystem analysis of dependency-annotated learner corpora"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a configuration file");

    std::string corpus_path, occurrences_path, gold_path, patterns_path, model_path;
    std::string out_dir = "out";
    std::string out_path;
    std::string annotations_path;
    std::vector<std::string> ms_names, prediction_paths, model_paths;
    std::uint64_t seed = 1;
    double test_fraction = 0.2, l2 = 1e-4, tol = 1e-6;
    int max_iter = 1000, lasso_folds = 5, n_perm = 10000;
    std::size_t n_texts = 5000;
    bool dump_matches = false, dump_features = false;

    auto* stats_cmd = app.add_subcommand("stats", "descriptive corpus statistics");
    stats_cmd->add_option("--corpus", corpus_path, "CoNLL-U corpus")->required();
    stats_cmd->add_option("--out", out_dir, "output directory");

    auto* extract_cmd = app.add_subcommand("extract", "run microsystem patterns");
    extract_cmd->add_option("--corpus", corpus_path)->required();
    extract_cmd->add_option("--ms", ms_names, "microsystem names (default: all)");
    extract_cmd->add_option("--gold", gold_path, "gold CSV for an extraction report");
    extract_cmd->add_option("--patterns", patterns_path, "pattern DSL file override");
    extract_cmd->add_option("--out", out_dir);
    extract_cmd->add_flag("--matches", dump_matches, "also dump raw pattern matches");

    auto* train_cmd = app.add_subcommand("train", "fit form-choice models");
    train_cmd->add_option("--corpus", corpus_path)->required();
    train_cmd->add_option("--occurrences", occurrences_path)->required();
    train_cmd->add_option("--ms", ms_names);
    train_cmd->add_option("--patterns", patterns_path);
    train_cmd->add_option("--out", out_dir);
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--test-fraction", test_fraction);
    train_cmd->add_option("--l2", l2);
    train_cmd->add_option("--tolerance", tol);
    train_cmd->add_option("--max-iterations", max_iter);
    train_cmd->add_flag("--features-out", dump_features,
                        "also dump the training feature vectors per microsystem");

    auto* predict_cmd = app.add_subcommand("predict", "per-occurrence form probabilities");
    predict_cmd->add_option("--corpus", corpus_path)->required();
    predict_cmd->add_option("--occurrences", occurrences_path)->required();
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--patterns", patterns_path);
    predict_cmd->add_option("--out", out_path)->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "classification quality reports");
    evaluate_cmd->add_option("--corpus", corpus_path)->required();
    evaluate_cmd->add_option("--occurrences", occurrences_path)->required();
    evaluate_cmd->add_option("--predictions", prediction_paths)->required();
    evaluate_cmd->add_option("--models", model_paths, "model files for importance tables");
    evaluate_cmd->add_option("--patterns", patterns_path);
    evaluate_cmd->add_option("--out", out_dir);

    auto* associate_cmd = app.add_subcommand("associate", "proficiency association reports");
    associate_cmd->add_option("--corpus", corpus_path)->required();
    associate_cmd->add_option("--occurrences", occurrences_path)->required();
    associate_cmd->add_option("--predictions", prediction_paths)->required();
    associate_cmd->add_option("--patterns", patterns_path);
    associate_cmd->add_option("--out", out_dir);
    associate_cmd->add_option("--seed", seed);
    associate_cmd->add_option("--lasso-folds", lasso_folds);

    auto* agreement_cmd = app.add_subcommand("agreement", "inter-annotator agreement");
    agreement_cmd->add_option("--annotations", annotations_path)->required();
    agreement_cmd->add_option("--out", out_dir);
    agreement_cmd->add_option("--permutations", n_perm);
    agreement_cmd->add_option("--seed", seed);

    auto* gen_cmd = app.add_subcommand("gen-synthetic", "");
    gen_cmd->group("");  // hidden: synthetic corpus with known ground truth
    gen_cmd->add_option("--texts", n_texts);
    gen_cmd->add_option("--seed", seed);
    gen_cmd->add_option("--out", out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (stats_cmd->parsed()) return cmd_stats(corpus_path, out_dir);
        if (extract_cmd->parsed())
            return cmd_extract(corpus_path, ms_names, gold_path, patterns_path, out_dir,
                               dump_matches);
        if (train_cmd->parsed())
            return cmd_train(corpus_path, occurrences_path, ms_names, patterns_path, out_dir,
                             seed, test_fraction, l2, tol, max_iter, dump_features);
        if (predict_cmd->parsed())
            return cmd_predict(corpus_path, occurrences_path, model_path, patterns_path,
                               out_path);
        if (evaluate_cmd->parsed())
            return cmd_evaluate(corpus_path, occurrences_path, prediction_paths, model_paths,
                                patterns_path, out_dir);
        if (associate_cmd->parsed())
            return cmd_associate(corpus_path, occurrences_path, prediction_paths,
                                 patterns_path, out_dir, seed, lasso_folds);
        if (agreement_cmd->parsed())
            return cmd_agreement(annotations_path, out_dir, n_perm, seed);
        if (gen_cmd->parsed()) return cmd_gen_synthetic(n_texts, seed, out_dir);
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
