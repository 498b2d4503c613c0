#pragma once

#include "gatecap/decode.hpp"

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace gatecap {

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

// Corpus-level BLEU with modified (clipped) n-gram precision and a brevity
// penalty against the closest reference length. Clipped counts are summed
// across sentences before the ratio is taken.
class BleuAccumulator {
 public:
  explicit BleuAccumulator(int max_n = 4);

  void add(const std::vector<std::string>& candidate,
           const std::vector<std::vector<std::string>>& references);

  // scores()[k-1] is BLEU-k: brevity penalty times the geometric mean of the
  // clipped precisions for n <= k. Orders with zero total n-grams are skipped
  // in the mean; a zero precision at some n zeroes every BLEU-k with k >= n.
  std::vector<double> scores() const;

  // Summed clipped matches and candidate n-gram totals for order n.
  long matched(int n) const { return matched_.at(static_cast<std::size_t>(n - 1)); }
  long total(int n) const { return total_.at(static_cast<std::size_t>(n - 1)); }

 private:
  int max_n_;
  std::vector<long> matched_;
  std::vector<long> total_;
  long candidate_len_ = 0;
  long reference_len_ = 0;
};

// Sentence-level convenience wrapper: one candidate against its references.
std::vector<double> bleu(const std::vector<std::string>& candidate,
                         const std::vector<std::vector<std::string>>& references,
                         int max_n = 4);

// ---------------------------------------------------------------------------
// Bag-of-words precision/recall/F1 on detected vs other words
// ---------------------------------------------------------------------------

struct PRFReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long n_pairs = 0;  // (candidate, reference) pairs that were scorable
};

struct BowResult {
  PRFReport detected;
  PRFReport others;
};

// Scores one candidate against each reference. The candidate and reference
// token bags are reduced to sets and split by membership in `object_words`
// (the detected labels, already expanded with any plural forms the caller
// wants to honor). Pairs whose reference-side group is empty are excluded
// from that group's average. Punctuation tokens are dropped unless
// keep_punct is set.
BowResult bow_scores(const std::vector<std::string>& candidate,
                     const std::vector<std::vector<std::string>>& references,
                     const std::set<std::string>& object_words,
                     bool keep_punct = false);

// Accumulates bow_scores across images: joint averaging over all scorable
// (candidate, reference) pairs, plus a per-image-then-mean variant.
class BowAccumulator {
 public:
  void add(const std::vector<std::string>& candidate,
           const std::vector<std::vector<std::string>>& references,
           const std::set<std::string>& object_words, bool keep_punct = false);

  BowResult joint() const;      // average over all pairs
  BowResult per_image() const;  // average of per-image means

 private:
  struct GroupSums {
    double p = 0, r = 0, f = 0;
    long n = 0;
    double image_f_sum = 0, image_p_sum = 0, image_r_sum = 0;
    long n_images = 0;
  };
  GroupSums detected_;
  GroupSums others_;
};

// ---------------------------------------------------------------------------
// Word type / frequency analysis of generated captions
// ---------------------------------------------------------------------------

struct FreqReport {
  long word_type = 0;          // unique words in the group
  double mean_frequency = 0.0; // mean training-corpus frequency of those words
  long missing = 0;            // words absent from the corpus counts (freq 0)
};

struct FreqAnalysis {
  FreqReport object;
  FreqReport others;
};

// Splits the unique words across all captions into object labels (categories
// plus known plural forms) and the rest, reporting counts and mean corpus
// frequency per group. Punctuation tokens are excluded unless keep_punct.
FreqAnalysis frequency_analysis(const std::vector<std::vector<std::string>>& captions,
                                const std::map<std::string, long>& corpus_counts,
                                const std::set<std::string>& categories,
                                const PluralMap& plurals, bool keep_punct = false);

// ---------------------------------------------------------------------------
// Whole-set evaluation
// ---------------------------------------------------------------------------

struct GateStats {
  double mean_object = 0.0;  // mean gate at detected-object token positions
  double mean_other = 0.0;
  long n_object = 0;
  long n_other = 0;
};

struct EvalReport {
  long n_images = 0;
  std::vector<double> bleu;  // BLEU-1..4
  BowResult bow_joint;
  BowResult bow_per_image;
  FreqAnalysis frequency;
  GateStats gate;
  std::vector<DecodedCaption> captions;  // per image, in input order
};

struct EvalInputs {
  const std::vector<ImageRecord>* images = nullptr;
  // Per image, the reference captions as raw strings (tokenized internally).
  const std::vector<std::vector<std::string>>* references = nullptr;
  const Vocab* vocab = nullptr;
  const PluralMap* plurals = nullptr;
  const std::set<std::string>* categories = nullptr;
  std::map<std::string, long> corpus_counts;
};

// Decodes every image and aggregates all metrics. `threads` > 1 decodes
// images in parallel; aggregation order is fixed, so results do not depend
// on scheduling.
EvalReport evaluate_set(const Params& params, const EvalInputs& inputs,
                        const DecodeOptions& decode_options, bool keep_punct = false,
                        int threads = 1);

}  // namespace gatecap
