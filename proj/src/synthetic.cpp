#include "mstk/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "mstk/util.hpp"

namespace mstk::synth {

namespace {

Token tk(int idx, std::string form, std::string lemma, std::string upos, std::string xpos,
         std::map<std::string, std::string> feats, int head, std::string deprel) {
    Token t;
    t.index = idx;
    t.form = std::move(form);
    t.lemma = std::move(lemma);
    t.upos = std::move(upos);
    t.xpos = std::move(xpos);
    t.feats = std::move(feats);
    t.head = head;
    t.deprel = std::move(deprel);
    return t;
}

using Feats = std::map<std::string, std::string>;

Feats verb_feats(bool past, bool third_sing) {
    Feats f{{"Mood", "Ind"}, {"VerbForm", "Fin"}, {"Tense", past ? "Past" : "Pres"}};
    if (!past && third_sing) {
        f["Number"] = "Sing";
        f["Person"] = "3";
    }
    return f;
}

struct PendingSite {
    std::string ms;
    std::string form;
    int anchor = 0;  // within-sentence token index
    std::vector<double> probs;
};

struct BuiltSentence {
    std::vector<Token> tokens;
    std::vector<PendingSite> sites;
};

// Softmax over (K-1) linear predictors with the last class as reference.
std::vector<double> softmax_ref(const std::vector<double>& eta) {
    std::vector<double> full = eta;
    full.push_back(0.0);
    double lse = num::log_sum_exp(full);
    for (double& v : full) v = std::exp(v - lse);
    return full;
}

int sample_class(const std::vector<double>& probs, std::mt19937_64& eng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(eng);
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u <= cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

std::vector<double> one_hot_probs(std::size_t k, std::size_t on) {
    std::vector<double> p(k, 0.0);
    p[on] = 1.0;
    return p;
}

// Generating coefficients for one microsystem: eta_k = b0 + b1*a1 + b2*a2 + b3*g
struct FormModel {
    std::vector<std::array<double, 4>> rows;  // K-1 rows

    std::vector<double> probs(int a1, int a2, int g) const {
        std::vector<double> eta;
        for (const auto& r : rows) eta.push_back(r[0] + r[1] * a1 + r[2] * a2 + r[3] * g);
        return softmax_ref(eta);
    }
};

const FormModel kPrfModel{{{0.6, 0.8, -1.0, 0.5}, {-0.2, -0.6, 0.7, -0.4}}};
const FormModel kDetModel{{{1.0, -2.2, 0.4, 0.3}, {0.5, 0.3, -0.5, -0.3}}};
const FormModel kMltnnModel{{{0.7, 0.0, -0.5, 0.4}, {0.2, 0.0, 0.6, -0.5}}};
const FormModel kDurModel{{{0.9, -0.8, 0.5, 0.3}, {0.1, 0.7, -0.6, -0.4}}};
const FormModel kQuant1Model{{{0.2, 1.0, -0.9, 0.5}}};
const FormModel kQuant2Model{{{0.4, 1.8, -0.6, 0.4}}};
const FormModel kRelModel{{{0.3, 0.7, -0.5, 0.4}, {-0.2, -0.5, 0.8, -0.3}}};

const std::vector<std::string> kNames = {"Anna", "Tom", "Maria", "Paul", "Sofia", "Louis"};
const std::vector<std::string> kNat = {"FR", "DE", "ES", "IT", "PL", "BR", "JP", "CN"};

// ---------------------------------------------------------- sentence builders

BuiltSentence build_prf(int a1, int a2, int form, const std::vector<double>& probs) {
    // [It|This|That] works|worked well .  /  seems|seemed fine .
    static const char* forms[3] = {"It", "This", "That"};
    static const char* lemmas[3] = {"it", "this", "that"};
    BuiltSentence s;
    Feats pf;
    if (form == 0)
        pf = {{"Number", "Sing"}, {"Person", "3"}, {"PronType", "Prs"}};
    else
        pf = {{"Number", "Sing"}, {"PronType", "Dem"}};
    s.tokens.push_back(tk(1, forms[form], lemmas[form], "PRON", form == 0 ? "PRP" : "DT",
                          pf, 2, "nsubj"));
    bool past = a1 == 1;
    if (a2 == 0) {
        s.tokens.push_back(tk(2, past ? "worked" : "works", "work", "VERB",
                              past ? "VBD" : "VBZ", verb_feats(past, true), 0, "root"));
        s.tokens.push_back(tk(3, "well", "well", "ADV", "RB", {}, 2, "advmod"));
    } else {
        s.tokens.push_back(tk(2, past ? "seemed" : "seems", "seem", "VERB",
                              past ? "VBD" : "VBZ", verb_feats(past, true), 0, "root"));
        s.tokens.push_back(tk(3, "fine", "fine", "ADJ", "JJ", {{"Degree", "Pos"}}, 2, "xcomp"));
    }
    s.tokens.push_back(tk(4, ".", ".", "PUNCT", ".", {}, 2, "punct"));
    s.sites.push_back({"PRF", std::vector<std::string>{"IT", "THIS", "THAT"}[form], 1, probs});
    return s;
}

BuiltSentence build_det(const std::string& name, int a1, int a2, int form,
                        const std::vector<double>& probs) {
    // NAME buys|bought [a|the|-] car(s) there .
    BuiltSentence s;
    bool past = a2 == 1;
    bool plural = a1 == 1;
    s.tokens.push_back(tk(1, name, name, "PROPN", "NNP", {{"Number", "Sing"}}, 2, "nsubj"));
    s.tokens.push_back(tk(2, past ? "bought" : "buys", "buy", "VERB", past ? "VBD" : "VBZ",
                          verb_feats(past, true), 0, "root"));
    int noun_idx;
    if (form == 0) {  // A
        s.tokens.push_back(tk(3, "a", "a", "DET", "DT",
                              {{"Definite", "Ind"}, {"PronType", "Art"}}, 4, "det"));
        noun_idx = 4;
    } else if (form == 1) {  // THE
        s.tokens.push_back(tk(3, "the", "the", "DET", "DT",
                              {{"Definite", "Def"}, {"PronType", "Art"}}, 4, "det"));
        noun_idx = 4;
    } else {
        noun_idx = 3;
    }
    s.tokens.push_back(tk(noun_idx, plural ? "cars" : "car", "car", "NOUN",
                          plural ? "NNS" : "NN", {{"Number", plural ? "Plur" : "Sing"}}, 2,
                          "obj"));
    s.tokens.push_back(tk(noun_idx + 1, "there", "there", "ADV", "RB", {}, 2, "advmod"));
    s.tokens.push_back(tk(noun_idx + 2, ".", ".", "PUNCT", ".", {}, 2, "punct"));
    int anchor = (form == 2) ? noun_idx : 3;
    s.sites.push_back({"DET", std::vector<std::string>{"A", "THE", "ZERO"}[form], anchor,
                       probs});
    return s;
}

BuiltSentence build_mltnn(const std::string& name, int a1, int a2, int form,
                          const std::vector<double>& probs) {
    BuiltSentence s;
    bool past = a2 == 1;
    bool plural = a1 == 1;
    const std::string head_form = plural ? "loans" : "loan";
    const std::string head_num = plural ? "Plur" : "Sing";
    const std::string head_xpos = plural ? "NNS" : "NN";
    s.tokens.push_back(tk(1, name, name, "PROPN", "NNP", {{"Number", "Sing"}}, 2, "nsubj"));
    s.tokens.push_back(tk(2, past ? "got" : "gets", "get", "VERB", past ? "VBD" : "VBZ",
                          verb_feats(past, true), 0, "root"));
    if (form == 0) {  // N2N1: NAME gets a|the student loan(s) there .
        if (plural) {
            s.tokens.push_back(tk(3, "the", "the", "DET", "DT",
                                  {{"Definite", "Def"}, {"PronType", "Art"}}, 5, "det"));
            s.sites.push_back({"DET", "THE", 3, one_hot_probs(3, 1)});
        } else {
            s.tokens.push_back(tk(3, "a", "a", "DET", "DT",
                                  {{"Definite", "Ind"}, {"PronType", "Art"}}, 5, "det"));
            s.sites.push_back({"DET", "A", 3, one_hot_probs(3, 0)});
        }
        s.tokens.push_back(
            tk(4, "student", "student", "NOUN", "NN", {{"Number", "Sing"}}, 5, "compound"));
        s.tokens.push_back(tk(5, head_form, "loan", "NOUN", head_xpos,
                              {{"Number", head_num}}, 2, "obj"));
        s.tokens.push_back(tk(6, "there", "there", "ADV", "RB", {}, 2, "advmod"));
        s.tokens.push_back(tk(7, ".", ".", "PUNCT", ".", {}, 2, "punct"));
        s.sites.push_back({"MLTNN", "N2N1", 5, probs});
    } else if (form == 1) {  // N1OFN2: NAME gets the loan(s) of a student there .
        s.tokens.push_back(tk(3, "the", "the", "DET", "DT",
                              {{"Definite", "Def"}, {"PronType", "Art"}}, 4, "det"));
        s.sites.push_back({"DET", "THE", 3, one_hot_probs(3, 1)});
        s.tokens.push_back(
            tk(4, head_form, "loan", "NOUN", head_xpos, {{"Number", head_num}}, 2, "obj"));
        s.tokens.push_back(tk(5, "of", "of", "ADP", "IN", {}, 7, "case"));
        s.tokens.push_back(tk(6, "a", "a", "DET", "DT",
                              {{"Definite", "Ind"}, {"PronType", "Art"}}, 7, "det"));
        s.sites.push_back({"DET", "A", 6, one_hot_probs(3, 0)});
        s.tokens.push_back(
            tk(7, "student", "student", "NOUN", "NN", {{"Number", "Sing"}}, 4, "nmod"));
        s.tokens.push_back(tk(8, "there", "there", "ADV", "RB", {}, 2, "advmod"));
        s.tokens.push_back(tk(9, ".", ".", "PUNCT", ".", {}, 2, "punct"));
        s.sites.push_back({"MLTNN", "N1OFN2", 7, probs});
    } else {  // N2SN1: NAME gets a student 's loan(s) there .
        s.tokens.push_back(tk(3, "a", "a", "DET", "DT",
                              {{"Definite", "Ind"}, {"PronType", "Art"}}, 4, "det"));
        s.sites.push_back({"DET", "A", 3, one_hot_probs(3, 0)});
        s.tokens.push_back(
            tk(4, "student", "student", "NOUN", "NN", {{"Number", "Sing"}}, 6, "nmod:poss"));
        s.tokens.push_back(tk(5, "'s", "'s", "PART", "POS", {}, 4, "case"));
        s.tokens.push_back(tk(6, head_form, "loan", "NOUN", head_xpos,
                              {{"Number", head_num}}, 2, "obj"));
        s.tokens.push_back(tk(7, "there", "there", "ADV", "RB", {}, 2, "advmod"));
        s.tokens.push_back(tk(8, ".", ".", "PUNCT", ".", {}, 2, "punct"));
        s.sites.push_back({"MLTNN", "N2SN1", 6, probs});
    }
    return s;
}

BuiltSentence build_dur(int a1, int a2, int form, const std::vector<double>& probs) {
    // They stay|stayed there [for|since|during] 2|1 year(s) .
    static const char* forms[3] = {"for", "since", "during"};
    BuiltSentence s;
    bool past = a2 == 1;
    bool plural = a1 == 1;
    s.tokens.push_back(tk(1, "They", "they", "PRON", "PRP",
                          {{"Case", "Nom"}, {"Number", "Plur"}, {"Person", "3"},
                           {"PronType", "Prs"}},
                          2, "nsubj"));
    s.tokens.push_back(tk(2, past ? "stayed" : "stay", "stay", "VERB",
                          past ? "VBD" : "VBP", verb_feats(past, false), 0, "root"));
    s.tokens.push_back(tk(3, "there", "there", "ADV", "RB", {}, 2, "advmod"));
    s.tokens.push_back(tk(4, forms[form], forms[form], "ADP", "IN", {}, 6, "case"));
    s.tokens.push_back(tk(5, plural ? "2" : "1", plural ? "2" : "1", "NUM", "CD",
                          {{"NumForm", "Digit"}, {"NumType", "Card"}}, 6, "nummod"));
    s.tokens.push_back(tk(6, plural ? "years" : "year", "year", "NOUN",
                          plural ? "NNS" : "NN", {{"Number", plural ? "Plur" : "Sing"}}, 2,
                          "obl"));
    s.tokens.push_back(tk(7, ".", ".", "PUNCT", ".", {}, 2, "punct"));
    s.sites.push_back({"DUR", std::vector<std::string>{"FOR", "SINCE", "DURING"}[form], 4,
                       probs});
    s.sites.push_back({"DET", "ZERO", 6, one_hot_probs(3, 2)});
    return s;
}

BuiltSentence build_quant1(int a1, int a2, int form, const std::vector<double>& probs) {
    // They do|did n't need [any|some] book(s) now .
    BuiltSentence s;
    bool past = a2 == 1;
    bool plural = a1 == 1;
    s.tokens.push_back(tk(1, "They", "they", "PRON", "PRP",
                          {{"Case", "Nom"}, {"Number", "Plur"}, {"Person", "3"},
                           {"PronType", "Prs"}},
                          4, "nsubj"));
    s.tokens.push_back(tk(2, past ? "did" : "do", "do", "AUX", past ? "VBD" : "VBP",
                          verb_feats(past, false), 4, "aux"));
    s.tokens.push_back(tk(3, "n't", "not", "PART", "RB", {{"Polarity", "Neg"}}, 4, "advmod"));
    s.tokens.push_back(tk(4, "need", "need", "VERB", "VB", {{"VerbForm", "Inf"}}, 0, "root"));
    const char* f = form == 0 ? "any" : "some";
    s.tokens.push_back(tk(5, f, f, "DET", "DT", {{"PronType", "Ind"}}, 6, "det"));
    s.tokens.push_back(tk(6, plural ? "books" : "book", "book", "NOUN",
                          plural ? "NNS" : "NN", {{"Number", plural ? "Plur" : "Sing"}}, 4,
                          "obj"));
    s.tokens.push_back(tk(7, "now", "now", "ADV", "RB", {}, 4, "advmod"));
    s.tokens.push_back(tk(8, ".", ".", "PUNCT", ".", {}, 4, "punct"));
    s.sites.push_back({"QUANT1", form == 0 ? "ANY" : "SOME", 5, probs});
    return s;
}

BuiltSentence build_quant2(const std::string& name, int a1, int a2, int form,
                           const std::vector<double>& probs) {
    // NAME reads|read many|much books|water there .
    BuiltSentence s;
    bool past = a2 == 1;
    bool count_noun = a1 == 1;
    s.tokens.push_back(tk(1, name, name, "PROPN", "NNP", {{"Number", "Sing"}}, 2, "nsubj"));
    const char* verb_form;
    const char* verb_lemma;
    if (count_noun) {
        verb_form = past ? "read" : "reads";
        verb_lemma = "read";
    } else {
        verb_form = past ? "drank" : "drinks";
        verb_lemma = "drink";
    }
    s.tokens.push_back(tk(2, verb_form, verb_lemma, "VERB", past ? "VBD" : "VBZ",
                          verb_feats(past, true), 0, "root"));
    const char* f = form == 0 ? "many" : "much";
    s.tokens.push_back(tk(3, f, f, "ADJ", "JJ", {{"Degree", "Pos"}}, 4, "amod"));
    s.tokens.push_back(tk(4, count_noun ? "books" : "water", count_noun ? "book" : "water",
                          "NOUN", count_noun ? "NNS" : "NN",
                          {{"Number", count_noun ? "Plur" : "Sing"}}, 2, "obj"));
    s.tokens.push_back(tk(5, "there", "there", "ADV", "RB", {}, 2, "advmod"));
    s.tokens.push_back(tk(6, ".", ".", "PUNCT", ".", {}, 2, "punct"));
    s.sites.push_back({"QUANT2", form == 0 ? "MANY" : "MUCH", 3, probs});
    return s;
}

BuiltSentence build_rel(const std::string& name, int a1, int a2, int form,
                        const std::vector<double>& probs) {
    // NAME met the girl(s) [that|which|who] stays|stayed .
    static const char* forms[3] = {"that", "which", "who"};
    BuiltSentence s;
    bool plural = a1 == 1;
    bool past = a2 == 1;
    s.tokens.push_back(tk(1, name, name, "PROPN", "NNP", {{"Number", "Sing"}}, 2, "nsubj"));
    s.tokens.push_back(tk(2, "met", "meet", "VERB", "VBD", verb_feats(true, false), 0,
                          "root"));
    s.tokens.push_back(tk(3, "the", "the", "DET", "DT",
                          {{"Definite", "Def"}, {"PronType", "Art"}}, 4, "det"));
    s.sites.push_back({"DET", "THE", 3, one_hot_probs(3, 1)});
    s.tokens.push_back(tk(4, plural ? "girls" : "girl", "girl", "NOUN",
                          plural ? "NNS" : "NN", {{"Number", plural ? "Plur" : "Sing"}}, 2,
                          "obj"));
    s.tokens.push_back(tk(5, forms[form], forms[form], "PRON", form == 2 ? "WP" : "WDT",
                          {{"PronType", "Rel"}}, 6, "nsubj"));
    s.tokens.push_back(tk(6, past ? "stayed" : "stays", "stay", "VERB",
                          past ? "VBD" : "VBZ", verb_feats(past, true), 4, "acl:relcl"));
    s.tokens.push_back(tk(7, ".", ".", "PUNCT", ".", {}, 2, "punct"));
    s.sites.push_back({"REL", std::vector<std::string>{"THAT", "WHICH", "WHO"}[form], 5,
                       probs});
    return s;
}

struct MsPlan {
    std::string name;
    const FormModel* model;
    int k;
};

const std::vector<MsPlan>& ms_plans() {
    static const std::vector<MsPlan> plans = {
        {"PRF", &kPrfModel, 3},    {"DET", &kDetModel, 3},   {"MLTNN", &kMltnnModel, 3},
        {"DUR", &kDurModel, 3},    {"QUANT1", &kQuant1Model, 2},
        {"QUANT2", &kQuant2Model, 2}, {"REL", &kRelModel, 3},
    };
    return plans;
}

// the CEFR link: one covariate per non-reference form of each microsystem
const std::vector<std::pair<std::string, double>>& cefr_link() {
    static const std::vector<std::pair<std::string, double>> link = {
        {"PRF.IT", -0.045},   {"PRF.THIS", 0.035},    {"DET.A", 0.040},
        {"DET.THE", -0.030},  {"MLTNN.N2N1", -0.035}, {"MLTNN.N1OFN2", 0.045},
        {"DUR.FOR", -0.040},  {"DUR.SINCE", 0.050},   {"QUANT1.ANY", 0.045},
        {"QUANT2.MANY", -0.040}, {"REL.THAT", 0.035},  {"REL.WHICH", -0.045},
    };
    return link;
}

}  // namespace

SyntheticCorpus generate(const SyntheticConfig& cfg) {
    SyntheticCorpus corpus;
    SyntheticTruth& truth = corpus.truth;
    for (const auto& [name, slope] : cefr_link()) {
        truth.covariate_names.push_back(name);
        truth.slopes.push_back(slope);
    }

    struct FormIndexer {
        std::map<std::string, std::map<std::string, std::size_t>> idx;
    } indexer;
    {
        std::map<std::string, std::vector<std::string>> forms = {
            {"PRF", {"IT", "THIS", "THAT"}},    {"DET", {"A", "THE", "ZERO"}},
            {"MLTNN", {"N2N1", "N1OFN2", "N2SN1"}}, {"DUR", {"FOR", "SINCE", "DURING"}},
            {"QUANT1", {"ANY", "SOME"}},        {"QUANT2", {"MANY", "MUCH"}},
            {"REL", {"THAT", "WHICH", "WHO"}},
        };
        for (auto& [msname, fs] : forms)
            for (std::size_t i = 0; i < fs.size(); ++i) indexer.idx[msname][fs[i]] = i;
    }

    std::vector<double> eta_per_text;
    std::vector<std::vector<double>> covariates_per_text;

    const std::array<double, 3> propensity_levels{0.2, 0.5, 0.8};

    for (std::size_t t = 0; t < cfg.n_texts; ++t) {
        auto eng = rng::make_engine(cfg.seed, "text:" + std::to_string(t));
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "syn%06zu", t + 1);
        std::string writing_id(idbuf);

        Document doc;
        doc.writing_id = writing_id;
        doc.nationality = kNat[static_cast<std::size_t>(unif(eng) * kNat.size()) % kNat.size()];
        doc.topic_id = "T" + std::to_string(1 + static_cast<int>(unif(eng) * 6) % 6);
        int nat_group = 0;
        for (std::size_t g = kNat.size() / 2; g < kNat.size(); ++g)
            if (doc.nationality == kNat[g]) nat_group = 1;

        std::vector<BuiltSentence> built;
        std::map<std::string, std::vector<std::vector<double>>> text_probs;  // ms -> site probs

        for (const MsPlan& plan : ms_plans()) {
            double p1 = propensity_levels[static_cast<std::size_t>(unif(eng) * 3) % 3];
            double p2 = propensity_levels[static_cast<std::size_t>(unif(eng) * 3) % 3];
            double cu = unif(eng);
            int count = cu < 0.5 ? 1 : (cu < 0.85 ? 2 : 3);
            for (int c = 0; c < count; ++c) {
                int a1 = unif(eng) < p1 ? 1 : 0;
                int a2 = unif(eng) < p2 ? 1 : 0;
                std::vector<double> probs = plan.model->probs(a1, a2, nat_group);
                int form = sample_class(probs, eng);
                const std::string& name =
                    kNames[static_cast<std::size_t>(unif(eng) * kNames.size()) %
                           kNames.size()];
                BuiltSentence s;
                if (plan.name == "PRF") s = build_prf(a1, a2, form, probs);
                else if (plan.name == "DET") s = build_det(name, a1, a2, form, probs);
                else if (plan.name == "MLTNN") s = build_mltnn(name, a1, a2, form, probs);
                else if (plan.name == "DUR") s = build_dur(a1, a2, form, probs);
                else if (plan.name == "QUANT1") s = build_quant1(a1, a2, form, probs);
                else if (plan.name == "QUANT2") s = build_quant2(name, a1, a2, form, probs);
                else s = build_rel(name, a1, a2, form, probs);
                built.push_back(std::move(s));
            }
        }
        std::shuffle(built.begin(), built.end(), eng);

        for (std::size_t si = 0; si < built.size(); ++si) {
            doc.sentences.emplace_back(built[si].tokens);
            for (const PendingSite& ps : built[si].sites) {
                TruthSite site;
                site.writing_id = writing_id;
                site.sentence_no = static_cast<int>(si) + 1;
                site.anchor_index = ps.anchor;
                site.ms = ps.ms;
                site.form = ps.form;
                site.probs = ps.probs;
                truth.sites.push_back(std::move(site));
                text_probs[ps.ms].push_back(ps.probs);
            }
        }

        // the text's true covariates: median per-form probability, percent
        std::vector<double> cov;
        for (const auto& [name, slope] : cefr_link()) {
            auto dot = name.find('.');
            std::string msname = name.substr(0, dot);
            std::size_t fidx = indexer.idx.at(msname).at(name.substr(dot + 1));
            std::vector<double> column;
            for (const auto& probs : text_probs.at(msname)) column.push_back(probs[fidx]);
            cov.push_back(100.0 * num::median(std::move(column)));
        }
        double eta = 0.0;
        for (std::size_t j = 0; j < cov.size(); ++j) eta += truth.slopes[j] * cov[j];
        eta_per_text.push_back(eta);
        covariates_per_text.push_back(cov);
        corpus.docs.push_back(std::move(doc));
    }

    // thresholds at fixed quantiles of the realized linear predictor
    std::vector<double> sorted_eta = eta_per_text;
    std::sort(sorted_eta.begin(), sorted_eta.end());
    auto quantile = [&](double q) {
        double pos = q * (static_cast<double>(sorted_eta.size()) - 1.0);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, sorted_eta.size() - 1);
        double w = pos - static_cast<double>(lo);
        return (1.0 - w) * sorted_eta[lo] + w * sorted_eta[hi];
    };
    truth.thresholds = {quantile(0.40), quantile(0.70), quantile(0.88), quantile(0.97)};
    for (std::size_t j = 1; j < truth.thresholds.size(); ++j)
        if (truth.thresholds[j] <= truth.thresholds[j - 1])
            truth.thresholds[j] = truth.thresholds[j - 1] + 1e-6;

    // sample CEFR per text from the proportional-odds link
    auto cefr_eng = rng::make_engine(cfg.seed, "cefr");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int j_levels = static_cast<int>(truth.thresholds.size()) + 1;
    std::vector<double> level_count(j_levels, 0.0);
    double loglik = 0.0;
    for (std::size_t t = 0; t < corpus.docs.size(); ++t) {
        double eta = eta_per_text[t];
        std::vector<double> cum(j_levels, 1.0);
        for (int j = 0; j < j_levels - 1; ++j)
            cum[j] = num::sigmoid(truth.thresholds[j] - eta);
        std::vector<double> probs(j_levels);
        for (int j = 0; j < j_levels; ++j)
            probs[j] = cum[j] - (j ? cum[j - 1] : 0.0);
        int level = sample_class(probs, cefr_eng);
        corpus.docs[t].cefr = static_cast<Cefr>(level);
        level_count[level] += 1.0;
        loglik += std::log(std::max(probs[level], 1e-300));

        TruthText tt;
        tt.writing_id = corpus.docs[t].writing_id;
        tt.cefr = corpus.docs[t].cefr;
        tt.covariates = covariates_per_text[t];
        truth.texts.push_back(std::move(tt));
    }
    truth.loglik = loglik;
    truth.loglik_null = 0.0;
    const double n = static_cast<double>(corpus.docs.size());
    for (int j = 0; j < j_levels; ++j)
        if (level_count[j] > 0)
            truth.loglik_null += level_count[j] * std::log(level_count[j] / n);
    truth.pseudo_r2 = truth.loglik_null < 0
                          ? std::clamp(1.0 - truth.loglik / truth.loglik_null, 0.0, 1.0)
                          : 0.0;
    return corpus;
}

void write_truth_sites(const SyntheticTruth& truth, std::ostream& out) {
    out << "writing_id\tsent\tidx\tms\tform\tprobs\n";
    for (const TruthSite& s : truth.sites) {
        out << s.writing_id << '\t' << s.sentence_no << '\t' << s.anchor_index << '\t' << s.ms
            << '\t' << s.form << '\t';
        for (std::size_t i = 0; i < s.probs.size(); ++i) {
            if (i) out << '|';
            out << str::num(s.probs[i]);
        }
        out << "\n";
    }
}

void write_truth_texts(const SyntheticTruth& truth, std::ostream& out) {
    out << "writing_id\tcefr";
    for (const auto& name : truth.covariate_names) out << '\t' << name;
    out << "\n";
    for (const TruthText& t : truth.texts) {
        out << t.writing_id << '\t' << to_string(t.cefr);
        for (double v : t.covariates) out << '\t' << str::num(v);
        out << "\n";
    }
}

void write_truth_model(const SyntheticTruth& truth, std::ostream& out) {
    nlohmann::json j;
    j["covariates"] = truth.covariate_names;
    j["slopes"] = truth.slopes;
    j["thresholds"] = truth.thresholds;
    j["loglik"] = truth.loglik;
    j["loglik_null"] = truth.loglik_null;
    j["pseudo_r2"] = truth.pseudo_r2;
    out << j.dump(2) << "\n";
}

}  // namespace mstk::synth
