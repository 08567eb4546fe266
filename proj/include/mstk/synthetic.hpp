#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mstk/corpus.hpp"

namespace mstk::synth {

// Synthetic learner-corpus generator with a known data-generating process:
// every microsystem slot is sampled from a softmax over context attributes,
// realized as an annotated sentence the extraction patterns recover exactly,
// and each text's CEFR level is sampled from a proportional-odds model over
// the text's median form probabilities.
struct SyntheticConfig {
    std::size_t n_texts = 5000;
    std::uint64_t seed = 1;
};

struct TruthSite {
    std::string writing_id;
    int sentence_no = 0;
    int anchor_index = 0;
    std::string ms;
    std::string form;           // realized form
    std::vector<double> probs;  // generating distribution over the MS forms
};

struct TruthText {
    std::string writing_id;
    Cefr cefr = Cefr::A1;
    std::vector<double> covariates;  // percent units, aligned with covariate_names
};

struct SyntheticTruth {
    std::vector<TruthSite> sites;
    std::vector<TruthText> texts;
    std::vector<std::string> covariate_names;  // "MS.FORM"
    std::vector<double> slopes;                // log odds per percentage point
    std::vector<double> thresholds;
    double loglik = 0.0;       // of the generating ordinal model on the sample
    double loglik_null = 0.0;  // thresholds-only
    double pseudo_r2 = 0.0;    // McFadden at the generating parameters
};

struct SyntheticCorpus {
    std::vector<Document> docs;
    SyntheticTruth truth;
};

SyntheticCorpus generate(const SyntheticConfig& cfg);

void write_truth_sites(const SyntheticTruth& truth, std::ostream& out);
void write_truth_texts(const SyntheticTruth& truth, std::ostream& out);
void write_truth_model(const SyntheticTruth& truth, std::ostream& out);  // JSON

}  // namespace mstk::synth
