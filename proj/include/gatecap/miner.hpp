#pragma once

#include "gatecap/corpus.hpp"

#include <set>
#include <string>
#include <vector>

namespace gatecap {

// A corpus sentence after tokenization. When the corpus carries dependency
// annotations ("token/TAG/HEADIDX"), adjective_head[i] is the token index the
// i-th token modifies (-1 otherwise), and the exact dependency rule applies.
struct IndexedSentence {
  std::vector<std::string> tokens;
  std::vector<int> adjective_head;
  bool annotated = false;
};

// Positions of a category label (or its plural form) in one sentence.
struct Posting {
  int sentence = -1;
  std::vector<int> positions;
};

// Inverted index over the corpus: per category, the sentences and token
// positions where the label or its plural occurs.
struct ObjectIndex {
  std::vector<IndexedSentence> sentences;
  std::unordered_map<std::string, std::vector<Posting>> postings;

  const std::vector<Posting>& postings_for(const std::string& label) const;
};

// Parses a corpus line, detecting the annotated token/TAG/HEADIDX format.
IndexedSentence parse_corpus_line(const std::string& line);

ObjectIndex build_object_index(const std::vector<std::string>& corpus,
                               const std::vector<std::string>& categories,
                               const PluralMap& plurals);

// Sentences where some occurrence pair of the two (distinct) labels has
// strictly between 1 and 4 tokens between them, in either order. Results are
// deduplicated and sorted by sentence id.
std::vector<int> mine_pair(const ObjectIndex& index, const std::string& obj_a,
                           const std::string& obj_b);

// Sentences where an adjective describes the object with at most 2 tokens in
// between. Annotated sentences use the dependency links; plain sentences fall
// back to lexicon adjectives preceding the object.
std::vector<int> mine_single(const ObjectIndex& index, const std::string& obj,
                             const std::set<std::string>& adjective_lexicon);

// A mined sentence bound to its vocabulary ids, the per-token reliable-word
// labels, and the object labels that licensed its retrieval.
struct PseudoCaption {
  std::vector<int> tokens;              // ends in eos
  std::vector<std::uint8_t> matches_detected;  // f_t; 1 iff token is a detected object
  std::vector<std::string> source_objects;     // 1 or 2 labels
};

// Binds sentence tokens to a detected set: ids via the vocab, eos appended,
// and f_t = 1 exactly where the token (or its singular form) is one of the
// image's detected labels. The eos position always gets f = 0.
PseudoCaption make_pseudo_caption(const std::vector<std::string>& sentence_tokens,
                                  const Vocab& vocab, const PluralMap& plurals,
                                  const std::set<std::string>& detected,
                                  std::vector<std::string> source_objects);

// An object label or unordered pair, with every image whose detections cover
// it and every sentence mined for it. One epoch iterates these units.
struct TrainingUnit {
  std::vector<std::string> key;  // sorted; size 1 or 2
  std::vector<int> caption_ids;  // indices into the corpus
  std::vector<int> image_ids;    // indices into the image list
};

// Builds units for every co-detected pair and every detected single object,
// dropping units with no mined sentences or no images. Deterministic order
// (sorted keys, pairs before singles).
std::vector<TrainingUnit> build_training_units(const std::vector<ImageRecord>& images,
                                               const ObjectIndex& index,
                                               const std::set<std::string>& adjective_lexicon);

}  // namespace gatecap
