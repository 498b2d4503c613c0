#include "gatecap/miner.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

namespace gatecap {

namespace {

const std::vector<Posting> kNoPostings;

// Annotated tokens look like "word/TAG/3": exactly three '/'-separated
// fields with a numeric head index.
bool parse_annotated_token(const std::string& raw, std::string& word, std::string& tag,
                           int& head) {
  auto first = raw.find('/');
  if (first == std::string::npos || first == 0) return false;
  auto second = raw.find('/', first + 1);
  if (second == std::string::npos || second == first + 1 || second + 1 >= raw.size()) {
    return false;
  }
  const std::string idx = raw.substr(second + 1);
  for (char c : idx) {
    if (c < '0' || c > '9') return false;
  }
  word = raw.substr(0, first);
  tag = raw.substr(first + 1, second - first - 1);
  head = std::atoi(idx.c_str());
  return true;
}

}  // namespace

IndexedSentence parse_corpus_line(const std::string& line) {
  IndexedSentence out;
  // Probe for the annotated format: every whitespace-separated field must
  // parse as token/TAG/HEADIDX.
  std::vector<std::string> fields;
  {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      if (j > i) fields.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  bool annotated = !fields.empty();
  std::vector<std::string> words;
  std::vector<std::string> tags;
  std::vector<int> heads;
  for (const auto& f : fields) {
    std::string word, tag;
    int head = -1;
    if (!parse_annotated_token(f, word, tag, head)) {
      annotated = false;
      break;
    }
    words.push_back(word);
    tags.push_back(tag);
    heads.push_back(head);
  }

  if (annotated) {
    out.annotated = true;
    for (std::size_t i = 0; i < words.size(); ++i) {
      // Annotated corpora are pre-tokenized; only lowercase the surface form.
      std::string word = words[i];
      for (char& c : word) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      out.tokens.push_back(std::move(word));
      bool adj = tags[i] == "ADJ" && heads[i] >= 0 &&
                 heads[i] < static_cast<int>(words.size());
      out.adjective_head.push_back(adj ? heads[i] : -1);
    }
    return out;
  }

  out.tokens = tokenize(line);
  out.adjective_head.assign(out.tokens.size(), -1);
  return out;
}

const std::vector<Posting>& ObjectIndex::postings_for(const std::string& label) const {
  auto it = postings.find(label);
  return it == postings.end() ? kNoPostings : it->second;
}

ObjectIndex build_object_index(const std::vector<std::string>& corpus,
                               const std::vector<std::string>& categories,
                               const PluralMap& plurals) {
  ObjectIndex index;
  index.sentences.reserve(corpus.size());
  for (const auto& line : corpus) index.sentences.push_back(parse_corpus_line(line));

  std::unordered_map<std::string, std::string> surface_to_label;
  for (const auto& label : categories) {
    surface_to_label[label] = label;
    std::string plural = plurals.plural_of(label);
    if (!plural.empty()) surface_to_label[plural] = label;
    index.postings.emplace(label, std::vector<Posting>());
  }

  for (std::size_t s = 0; s < index.sentences.size(); ++s) {
    std::unordered_map<std::string, Posting> hits;
    const auto& tokens = index.sentences[s].tokens;
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      auto it = surface_to_label.find(tokens[p]);
      if (it == surface_to_label.end()) continue;
      Posting& post = hits[it->second];
      post.sentence = static_cast<int>(s);
      post.positions.push_back(static_cast<int>(p));
    }
    for (auto& [label, post] : hits) {
      index.postings[label].push_back(std::move(post));
    }
  }
  // Postings were gathered per sentence in order, but the per-label inner
  // loop above visits an unordered_map; restore sentence order.
  for (auto& [label, posts] : index.postings) {
    std::sort(posts.begin(), posts.end(),
              [](const Posting& a, const Posting& b) { return a.sentence < b.sentence; });
  }
  return index;
}

std::vector<int> mine_pair(const ObjectIndex& index, const std::string& obj_a,
                           const std::string& obj_b) {
  if (obj_a == obj_b) throw DataError("mine_pair requires two distinct labels");
  if (index.postings.count(obj_a) == 0) throw DataError("unknown object label: " + obj_a);
  if (index.postings.count(obj_b) == 0) throw DataError("unknown object label: " + obj_b);

  const auto& posts_a = index.postings_for(obj_a);
  const auto& posts_b = index.postings_for(obj_b);
  std::vector<int> out;
  std::size_t ia = 0, ib = 0;
  while (ia < posts_a.size() && ib < posts_b.size()) {
    if (posts_a[ia].sentence < posts_b[ib].sentence) {
      ++ia;
    } else if (posts_b[ib].sentence < posts_a[ia].sentence) {
      ++ib;
    } else {
      bool accept = false;
      for (int pa : posts_a[ia].positions) {
        for (int pb : posts_b[ib].positions) {
          int between = std::abs(pa - pb) - 1;
          if (between > 1 && between <= 4) {
            accept = true;
            break;
          }
        }
        if (accept) break;
      }
      if (accept) out.push_back(posts_a[ia].sentence);
      ++ia;
      ++ib;
    }
  }
  return out;
}

std::vector<int> mine_single(const ObjectIndex& index, const std::string& obj,
                             const std::set<std::string>& adjective_lexicon) {
  if (index.postings.count(obj) == 0) throw DataError("unknown object label: " + obj);

  std::vector<int> out;
  for (const Posting& post : index.postings_for(obj)) {
    const IndexedSentence& sentence = index.sentences[static_cast<std::size_t>(post.sentence)];
    bool accept = false;
    if (sentence.annotated) {
      // Exact rule: an adjective whose head is an occurrence of the object,
      // with at most 2 tokens between them.
      for (std::size_t i = 0; i < sentence.tokens.size() && !accept; ++i) {
        int head = sentence.adjective_head[i];
        if (head < 0) continue;
        for (int pos : post.positions) {
          int between = std::abs(static_cast<int>(i) - pos) - 1;
          if (head == pos && between <= 2) {
            accept = true;
            break;
          }
        }
      }
    } else {
      // Fallback: a lexicon adjective preceding the object within 2 tokens.
      for (int pos : post.positions) {
        for (int i = std::max(0, pos - 3); i < pos && !accept; ++i) {
          if (adjective_lexicon.count(sentence.tokens[static_cast<std::size_t>(i)]) > 0) {
            accept = true;
          }
        }
        if (accept) break;
      }
    }
    if (accept) out.push_back(post.sentence);
  }
  return out;
}

PseudoCaption make_pseudo_caption(const std::vector<std::string>& sentence_tokens,
                                  const Vocab& vocab, const PluralMap& plurals,
                                  const std::set<std::string>& detected,
                                  std::vector<std::string> source_objects) {
  PseudoCaption cap;
  cap.source_objects = std::move(source_objects);
  for (const auto& tok : sentence_tokens) {
    int id = vocab.id_of(tok);
    cap.tokens.push_back(id);
    bool match = id != vocab.unk_id && vocab.is_object(id) &&
                 detected.count(plurals.canonical(tok)) > 0;
    cap.matches_detected.push_back(match ? 1 : 0);
  }
  cap.tokens.push_back(vocab.eos_id);
  cap.matches_detected.push_back(0);
  return cap;
}

std::vector<TrainingUnit> build_training_units(const std::vector<ImageRecord>& images,
                                               const ObjectIndex& index,
                                               const std::set<std::string>& adjective_lexicon) {
  std::map<std::vector<std::string>, std::vector<int>> images_by_key;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<std::string> labels(images[i].detected.begin(), images[i].detected.end());
    for (std::size_t a = 0; a < labels.size(); ++a) {
      images_by_key[{labels[a]}].push_back(static_cast<int>(i));
      for (std::size_t b = a + 1; b < labels.size(); ++b) {
        images_by_key[{labels[a], labels[b]}].push_back(static_cast<int>(i));
      }
    }
  }

  std::vector<TrainingUnit> units;
  // Pairs first, then singles, each in sorted key order.
  for (int want_pair = 1; want_pair >= 0; --want_pair) {
    for (const auto& [key, image_ids] : images_by_key) {
      if (static_cast<int>(key.size() == 2) != want_pair) continue;
      TrainingUnit unit;
      unit.key = key;
      unit.image_ids = image_ids;
      if (key.size() == 2) {
        unit.caption_ids = mine_pair(index, key[0], key[1]);
      } else {
        unit.caption_ids = mine_single(index, key[0], adjective_lexicon);
      }
      if (!unit.caption_ids.empty() && !unit.image_ids.empty()) {
        units.push_back(std::move(unit));
      }
    }
  }
  return units;
}

}  // namespace gatecap
