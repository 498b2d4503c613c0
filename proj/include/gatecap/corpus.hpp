#pragma once

#include "gatecap/common.hpp"

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace gatecap {

// One image: an id, its raw feature vector (from an external provider or the
// toy generator) and the set of object labels a detector reported for it.
struct ImageRecord {
  std::string id;
  Vec feature;
  std::set<std::string> detected;
};

// Singular<->plural dictionary. Plural handling everywhere is a lookup in
// this table; no morphology is generated.
class PluralMap {
 public:
  void add(const std::string& singular, const std::string& plural);

  bool has_singular(const std::string& word) const { return to_plural_.count(word) > 0; }
  bool has_plural(const std::string& word) const { return to_singular_.count(word) > 0; }

  // Plural form of `word`, or empty string if none is known.
  std::string plural_of(const std::string& word) const;
  // Singular form of `word`, or empty string if `word` is not a known plural.
  std::string singular_of(const std::string& word) const;

  // Singular form if `word` is a known plural, otherwise `word` itself.
  std::string canonical(const std::string& word) const;

  // All (singular, plural) pairs sorted by singular.
  std::vector<std::pair<std::string, std::string>> pairs() const;

  std::size_t size() const { return to_plural_.size(); }

 private:
  std::unordered_map<std::string, std::string> to_plural_;
  std::unordered_map<std::string, std::string> to_singular_;
};

// Token <-> id table with an <eos>/<unk> convention and per-token corpus
// counts. Object-category tokens (and their plural forms) are flagged.
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;
  int eos_id = -1;
  int unk_id = -1;
  std::vector<bool> object_flags;  // per token id
  std::vector<long> counts;        // corpus frequency per token id

  int size() const { return static_cast<int>(tokens.size()); }

  // Id of `word`, or unk_id when out of vocabulary.
  int id_of(const std::string& word) const;
  // Id of `word`, or -1 when absent (no unk fallback).
  int find(const std::string& word) const;

  const std::string& token(int id) const { return tokens.at(static_cast<std::size_t>(id)); }
  bool is_object(int id) const { return object_flags.at(static_cast<std::size_t>(id)); }

  // FNV hash over the token list; checkpoints store it so a model can refuse
  // to load against a different vocabulary.
  std::uint64_t hash() const;
};

// Lowercases, splits on whitespace, and peels leading/trailing ASCII
// punctuation off each token into separate single-character tokens.
// Interior punctuation (don't, e-mail) is kept. Empty input -> empty list.
std::vector<std::string> tokenize(std::string_view line);

// Builds a Vocab from raw corpus lines. Tokens with frequency < min_count
// collapse into <unk>. <unk> and <eos> are always present, appended after
// the surviving tokens in first-occurrence order.
Vocab build_vocab(const std::vector<std::string>& corpus,
                  const std::set<std::string>& categories,
                  const PluralMap& plurals,
                  int min_count = 1);

// Same, over already-tokenized sentences (used with annotated corpora, whose
// raw lines carry tags that must not enter the vocabulary).
Vocab build_vocab_tokenized(const std::vector<std::vector<std::string>>& sentences,
                            const std::set<std::string>& categories,
                            const PluralMap& plurals,
                            int min_count = 1);

// ---------------------------------------------------------------------------
// Synthetic toy world
// ---------------------------------------------------------------------------

struct ToyConfig {
  int categories = 8;           // number of object labels (>= 4)
  int images = 500;             // scenes rendered as images
  int sentences = 2000;         // corpus size, generated from disjoint scenes
  int min_objects = 2;          // objects per scene
  int max_objects = 3;
  double drop_rate = 0.1;       // per-object detector miss probability
  double spurious_rate = 0.3;   // Poisson mean of extra detected labels
  int feature_dim = 16;         // d'
  double noise_scale = 0.1;     // Gaussian noise on scene features
  double adjective_prob = 0.5;  // chance of an adjective before each object
  double plural_prob = 0.15;    // chance an object is rendered in plural form
};

// A fully synthetic dataset: scenes with known objects, noisy detections,
// template sentences from disjoint scenes, and held-out gold captions.
struct ToyWorld {
  ToyConfig config;
  std::vector<std::string> categories;
  std::vector<std::string> adjectives;
  std::vector<std::string> verbs;
  std::vector<std::string> preps;
  PluralMap plurals;
  std::vector<ImageRecord> scenes;                 // detections include noise
  std::vector<std::set<std::string>> truth;        // true objects per scene
  std::vector<std::vector<std::string>> truth_captions;  // references per scene
  std::vector<std::string> corpus;                 // raw sentence lines
};

// Deterministic function of (config, seed). Scene features are the sum of
// fixed per-category embeddings plus Gaussian noise; sentences follow a
// closed template grammar over the same word lists.
ToyWorld generate_toy_world(const ToyConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------
// features file:    first line "d <int>", then "id<TAB>v1 v2 ... vd"
// detections file:  "id<TAB>label1,label2,..." (field may be empty)
// corpus file:      one sentence per line
// categories file:  one label per line
// plural map file:  "singular<TAB>plural" per line
// references file:  "id<TAB>ref1<TAB>ref2..."

std::vector<std::string> load_lines(const std::string& path);

std::set<std::string> load_categories(const std::string& path);
PluralMap load_plural_map(const std::string& path);
std::set<std::string> load_word_list(const std::string& path);

// Joins features and detections on id. Rejects duplicate ids, ids present in
// only one file, rows whose width disagrees with the declared dimension, and
// labels missing from `categories`.
std::vector<ImageRecord> load_image_records(const std::string& features_path,
                                            const std::string& detections_path,
                                            const std::set<std::string>& categories);

// Features alone, detections left empty (decoding does not need them).
std::vector<ImageRecord> load_features_only(const std::string& features_path);

// Per-image reference captions, keyed and ordered as in the file.
struct ReferenceSet {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> refs;  // raw reference strings per id
};
ReferenceSet load_references(const std::string& path);

void write_lines(const std::string& path, const std::vector<std::string>& lines);
void write_features(const std::string& path, const std::vector<ImageRecord>& records);
void write_detections(const std::string& path, const std::vector<ImageRecord>& records);
void write_plural_map(const std::string& path, const PluralMap& plurals);
void write_references(const std::string& path,
                      const std::vector<std::string>& ids,
                      const std::vector<std::vector<std::string>>& refs);

}  // namespace gatecap
