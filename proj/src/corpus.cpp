#include "gatecap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gatecap {

namespace {

// Closed word pools for the toy grammar. Categories are drawn from the noun
// pool in order; the other lists are used whole.
const std::vector<std::string> kNounPool = {
    "cat",  "dog",  "girl",  "boy",  "table", "plant", "bird", "horse",
    "car",  "tree", "house", "boat", "cup",   "lamp",  "bike", "bear",
    "duck", "goat", "frog",  "desk", "ball",  "sock",  "coat", "drum"};

// Adjectives are sampled with Zipf-like weights (rank r gets weight 1/(r+1)),
// giving the corpus a long tail of rare modifiers.
const std::vector<std::string> kAdjectives = {
    "big",   "small", "fluffy", "old",   "young", "red",  "white", "happy",
    "shiny", "quiet", "brave",  "dusty", "pale",  "wild", "fancy", "plain"};

const std::vector<std::string> kVerbs = {
    "sits", "sleeps", "runs", "stands", "waits", "plays", "jumps", "rests"};

const std::vector<std::string> kPreps = {"near", "beside", "behind",
                                         "above", "under",  "with"};

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_ascii_punct(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

}  // namespace

void PluralMap::add(const std::string& singular, const std::string& plural) {
  if (singular.empty() || plural.empty() || singular == plural) {
    throw DataError("invalid plural map entry: '" + singular + "' -> '" + plural + "'");
  }
  to_plural_[singular] = plural;
  to_singular_[plural] = singular;
}

std::string PluralMap::plural_of(const std::string& word) const {
  auto it = to_plural_.find(word);
  return it == to_plural_.end() ? std::string() : it->second;
}

std::string PluralMap::singular_of(const std::string& word) const {
  auto it = to_singular_.find(word);
  return it == to_singular_.end() ? std::string() : it->second;
}

std::string PluralMap::canonical(const std::string& word) const {
  auto it = to_singular_.find(word);
  return it == to_singular_.end() ? word : it->second;
}

std::vector<std::pair<std::string, std::string>> PluralMap::pairs() const {
  std::vector<std::pair<std::string, std::string>> out(to_plural_.begin(), to_plural_.end());
  std::sort(out.begin(), out.end());
  return out;
}

int Vocab::id_of(const std::string& word) const {
  auto it = ids.find(word);
  return it == ids.end() ? unk_id : it->second;
}

int Vocab::find(const std::string& word) const {
  auto it = ids.find(word);
  return it == ids.end() ? -1 : it->second;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tokens) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::string lower = ascii_lower(line);
  std::istringstream ss(lower);
  std::string raw;
  while (ss >> raw) {
    std::size_t begin = 0;
    std::size_t end = raw.size();
    while (begin < end && is_ascii_punct(raw[begin])) ++begin;
    while (end > begin && is_ascii_punct(raw[end - 1])) --end;
    for (std::size_t i = 0; i < begin; ++i) out.emplace_back(1, raw[i]);
    std::string core = raw.substr(begin, end - begin);
    std::vector<std::string> trailing;
    for (std::size_t i = end; i < raw.size(); ++i) trailing.emplace_back(1, raw[i]);
    if (!core.empty()) out.push_back(std::move(core));
    for (auto& t : trailing) out.push_back(std::move(t));
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus,
                  const std::set<std::string>& categories,
                  const PluralMap& plurals,
                  int min_count) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& line : corpus) sentences.push_back(tokenize(line));
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  return build_vocab_tokenized(sentences, categories, plurals, min_count);
}

Vocab build_vocab_tokenized(const std::vector<std::vector<std::string>>& sentences,
                            const std::set<std::string>& categories,
                            const PluralMap& plurals,
                            int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (sentences.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

  std::vector<std::string> order;  // first-occurrence order
  std::unordered_map<std::string, long> freq;
  for (const auto& sentence : sentences) {
    for (const auto& tok : sentence) {
      auto [it, inserted] = freq.try_emplace(tok, 0);
      if (inserted) order.push_back(tok);
      ++it->second;
    }
  }
  if (order.empty()) throw DataError("corpus contains no tokens");

  Vocab vocab;
  long dropped = 0;
  for (const auto& tok : order) {
    long n = freq[tok];
    if (n < min_count) {
      dropped += n;
      continue;
    }
    vocab.ids.emplace(tok, vocab.size());
    vocab.tokens.push_back(tok);
    vocab.counts.push_back(n);
  }
  vocab.unk_id = vocab.size();
  vocab.tokens.push_back("<unk>");
  vocab.counts.push_back(dropped);
  vocab.ids.emplace("<unk>", vocab.unk_id);
  vocab.eos_id = vocab.size();
  vocab.tokens.push_back("<eos>");
  vocab.counts.push_back(0);
  vocab.ids.emplace("<eos>", vocab.eos_id);

  vocab.object_flags.assign(static_cast<std::size_t>(vocab.size()), false);
  for (int id = 0; id < vocab.size(); ++id) {
    const std::string& tok = vocab.tokens[static_cast<std::size_t>(id)];
    if (categories.count(tok) > 0 || categories.count(plurals.singular_of(tok)) > 0) {
      vocab.object_flags[static_cast<std::size_t>(id)] = true;
    }
  }
  vocab.object_flags[static_cast<std::size_t>(vocab.unk_id)] = false;
  vocab.object_flags[static_cast<std::size_t>(vocab.eos_id)] = false;
  return vocab;
}

// ---------------------------------------------------------------------------
// Toy world
// ---------------------------------------------------------------------------

namespace {

struct ToyScene {
  std::vector<std::string> objects;  // ordered, distinct
  std::size_t verb;                  // index into verbs (fixed by first object)
  std::size_t prep;                  // index into preps (fixed by second object)
};

// The verb is a deterministic function of the subject and the preposition of
// the second object, so the non-object words of a caption are predictable
// from its objects. That gives a language model signal to learn.
ToyScene sample_scene(Rng& rng, const std::vector<std::string>& categories,
                      int min_objects, int max_objects) {
  ToyScene scene;
  int n = min_objects + static_cast<int>(rng.index(static_cast<std::size_t>(max_objects - min_objects + 1)));
  std::vector<std::size_t> picks;
  while (picks.size() < static_cast<std::size_t>(n)) {
    std::size_t c = rng.index(categories.size());
    if (std::find(picks.begin(), picks.end(), c) == picks.end()) picks.push_back(c);
  }
  for (std::size_t c : picks) scene.objects.push_back(categories[c]);
  scene.verb = picks[0] % kVerbs.size();
  scene.prep = picks[1] % kPreps.size();
  return scene;
}

std::size_t sample_zipf(Rng& rng, std::size_t n) {
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += 1.0 / static_cast<double>(r + 1);
  double draw = rng.uniform(0.0, total);
  double cum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    cum += 1.0 / static_cast<double>(r + 1);
    if (draw <= cum) return r;
  }
  return n - 1;
}

// "a <adj>? <obj1> <verb> <prep> a <adj>? <obj2>." with optional plural
// rendering ("two cats"). The trailing period is attached to the last word.
// Adjectives usually follow a per-noun signature, so they correlate with the
// pictured objects the way real modifiers do; the rest come from a Zipf tail.
std::string render_sentence(Rng& rng, const ToyScene& scene, const PluralMap& plurals,
                            const std::vector<std::string>& categories,
                            double adjective_prob, double plural_prob) {
  std::ostringstream out;
  auto emit_noun = [&](const std::string& obj) {
    bool plural = rng.bernoulli(plural_prob);
    bool adjective = rng.bernoulli(adjective_prob);
    out << (plural ? "two" : "a");
    if (adjective) {
      std::size_t idx;
      if (rng.bernoulli(0.75)) {
        auto it = std::find(categories.begin(), categories.end(), obj);
        idx = static_cast<std::size_t>(it - categories.begin()) % kAdjectives.size();
      } else {
        idx = sample_zipf(rng, kAdjectives.size());
      }
      out << ' ' << kAdjectives[idx];
    }
    out << ' ' << (plural ? plurals.plural_of(obj) : obj);
  };
  emit_noun(scene.objects[0]);
  out << ' ' << kVerbs[scene.verb] << ' ' << kPreps[scene.prep] << ' ';
  emit_noun(scene.objects[1]);
  std::string s = out.str();
  s += '.';
  return s;
}

// Canonical gold caption: no adjectives, singular forms, both object orders.
std::vector<std::string> gold_captions(const ToyScene& scene,
                                       const std::vector<std::string>& categories) {
  auto index_of = [&](const std::string& obj) {
    return static_cast<std::size_t>(
        std::find(categories.begin(), categories.end(), obj) - categories.begin());
  };
  auto line = [&](const std::string& first, const std::string& second) {
    std::ostringstream out;
    out << "a " << first << ' ' << kVerbs[index_of(first) % kVerbs.size()] << ' '
        << kPreps[index_of(second) % kPreps.size()] << " a " << second << '.';
    return out.str();
  };
  return {line(scene.objects[0], scene.objects[1]),
          line(scene.objects[1], scene.objects[0])};
}

}  // namespace

ToyWorld generate_toy_world(const ToyConfig& config, std::uint64_t seed) {
  if (config.categories < 4) throw ConfigError("toy world needs at least 4 categories");
  if (config.categories > static_cast<int>(kNounPool.size())) {
    throw ConfigError("toy world supports at most " + std::to_string(kNounPool.size()) +
                      " categories");
  }
  if (config.images < 1 || config.sentences < 1) {
    throw ConfigError("toy world sizes must be positive");
  }
  if (config.min_objects < 2 || config.max_objects < config.min_objects ||
      config.max_objects > config.categories) {
    throw ConfigError("objects per scene must satisfy 2 <= min <= max <= categories");
  }
  if (config.drop_rate < 0.0 || config.drop_rate > 1.0 || config.spurious_rate < 0.0) {
    throw ConfigError("detector noise rates must be within [0,1] (drop) and >= 0 (spurious)");
  }
  if (config.feature_dim < 2) throw ConfigError("feature dimension must be >= 2");
  if (config.adjective_prob < 0.0 || config.adjective_prob > 1.0 ||
      config.plural_prob < 0.0 || config.plural_prob > 1.0) {
    throw ConfigError("template probabilities must be in [0,1]");
  }

  ToyWorld world;
  world.config = config;
  world.categories.assign(kNounPool.begin(), kNounPool.begin() + config.categories);
  world.adjectives = kAdjectives;
  world.verbs = kVerbs;
  world.preps = kPreps;
  for (const auto& noun : world.categories) world.plurals.add(noun, noun + "s");

  Rng rng(seed);

  // Fixed per-category embeddings; a scene's feature is their sum plus noise.
  std::vector<Vec> embeddings;
  embeddings.reserve(world.categories.size());
  for (std::size_t c = 0; c < world.categories.size(); ++c) {
    Vec e(config.feature_dim);
    for (int i = 0; i < config.feature_dim; ++i) e[i] = rng.normal();
    embeddings.push_back(std::move(e));
  }
  auto embedding_of = [&](const std::string& obj) -> const Vec& {
    auto it = std::find(world.categories.begin(), world.categories.end(), obj);
    return embeddings[static_cast<std::size_t>(it - world.categories.begin())];
  };

  for (int s = 0; s < config.images; ++s) {
    ToyScene scene = sample_scene(rng, world.categories, config.min_objects, config.max_objects);
    ImageRecord rec;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "img%04d", s);
    rec.id = idbuf;
    rec.feature = Vec::Zero(config.feature_dim);
    for (const auto& obj : scene.objects) rec.feature += embedding_of(obj);
    for (int i = 0; i < config.feature_dim; ++i) {
      rec.feature[i] += config.noise_scale * rng.normal();
    }

    std::set<std::string> truth(scene.objects.begin(), scene.objects.end());
    for (const auto& obj : truth) {
      if (!rng.bernoulli(config.drop_rate)) rec.detected.insert(obj);
    }
    int extra = rng.poisson(config.spurious_rate);
    for (int k = 0; k < extra; ++k) {
      rec.detected.insert(world.categories[rng.index(world.categories.size())]);
    }

    world.truth.push_back(std::move(truth));
    world.truth_captions.push_back(gold_captions(scene, world.categories));
    world.scenes.push_back(std::move(rec));
  }

  // Text corpus from scenes drawn independently of the image scenes; no
  // image-sentence pair exists by construction.
  for (int s = 0; s < config.sentences; ++s) {
    ToyScene scene = sample_scene(rng, world.categories, config.min_objects, config.max_objects);
    world.corpus.push_back(render_sentence(rng, scene, world.plurals, world.categories,
                                           config.adjective_prob, config.plural_prob));
  }
  return world;
}

// ---------------------------------------------------------------------------
// Loaders and writers
// ---------------------------------------------------------------------------

std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::set<std::string> load_categories(const std::string& path) {
  std::set<std::string> out;
  for (const auto& line : load_lines(path)) {
    if (!line.empty()) out.insert(line);
  }
  if (out.empty()) throw DataError("categories file is empty: " + path);
  return out;
}

PluralMap load_plural_map(const std::string& path) {
  PluralMap map;
  for (const auto& line : load_lines(path)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("plural map line missing tab: '" + line + "'");
    }
    map.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return map;
}

std::set<std::string> load_word_list(const std::string& path) {
  std::set<std::string> out;
  for (const auto& line : load_lines(path)) {
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::vector<ImageRecord> load_features_only(const std::string& features_path) {
  auto feature_lines = load_lines(features_path);
  if (feature_lines.empty()) throw DataError("features file is empty: " + features_path);

  int dim = 0;
  {
    std::istringstream header(feature_lines[0]);
    std::string tag;
    if (!(header >> tag >> dim) || tag != "d" || dim < 1) {
      throw DataError("features file must start with 'd <int>': " + features_path);
    }
  }

  std::vector<ImageRecord> records;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < feature_lines.size(); ++i) {
    const std::string& line = feature_lines[i];
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("features row missing tab: '" + line + "'");
    }
    ImageRecord rec;
    rec.id = line.substr(0, tab);
    if (!ids.insert(rec.id).second) throw DataError("duplicate image id: " + rec.id);
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> row;
    double x;
    while (values >> x) row.push_back(x);
    if (static_cast<int>(row.size()) != dim) {
      throw DataError("feature row for '" + rec.id + "' has " + std::to_string(row.size()) +
                      " values, expected " + std::to_string(dim));
    }
    rec.feature = Eigen::Map<const Vec>(row.data(), dim);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ImageRecord> load_image_records(const std::string& features_path,
                                            const std::string& detections_path,
                                            const std::set<std::string>& categories) {
  std::vector<ImageRecord> records = load_features_only(features_path);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, i);

  std::set<std::string> seen;
  for (const auto& line : load_lines(detections_path)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    std::string id = tab == std::string::npos ? line : line.substr(0, tab);
    std::string field = tab == std::string::npos ? std::string() : line.substr(tab + 1);
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw DataError("detections id '" + id + "' has no feature row");
    }
    if (!seen.insert(id).second) throw DataError("duplicate detections id: " + id);
    ImageRecord& rec = records[it->second];
    std::istringstream labels(field);
    std::string label;
    while (std::getline(labels, label, ',')) {
      if (label.empty()) continue;
      if (categories.count(label) == 0) {
        throw DataError("detected label '" + label + "' is not in the category set");
      }
      rec.detected.insert(label);
    }
  }
  for (const auto& rec : records) {
    if (seen.count(rec.id) == 0) {
      throw DataError("image id '" + rec.id + "' has no detections row");
    }
  }
  return records;
}

ReferenceSet load_references(const std::string& path) {
  ReferenceSet out;
  for (const auto& line : load_lines(path)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() < 2) throw DataError("references line needs id and >=1 reference");
    out.ids.push_back(fields[0]);
    out.refs.emplace_back(fields.begin() + 1, fields.end());
  }
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write file: " + path);
  for (const auto& line : lines) o << line << '\n';
}

void write_features(const std::string& path, const std::vector<ImageRecord>& records) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write file: " + path);
  int dim = records.empty() ? 0 : static_cast<int>(records[0].feature.size());
  o << "d " << dim << '\n';
  char buf[40];
  for (const auto& rec : records) {
    o << rec.id << '\t';
    for (int i = 0; i < rec.feature.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", rec.feature[i]);
      o << (i ? " " : "") << buf;
    }
    o << '\n';
  }
}

void write_detections(const std::string& path, const std::vector<ImageRecord>& records) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write file: " + path);
  for (const auto& rec : records) {
    o << rec.id << '\t';
    bool first = true;
    for (const auto& label : rec.detected) {
      o << (first ? "" : ",") << label;
      first = false;
    }
    o << '\n';
  }
}

void write_plural_map(const std::string& path, const PluralMap& plurals) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write file: " + path);
  for (const auto& [singular, plural] : plurals.pairs()) {
    o << singular << '\t' << plural << '\n';
  }
}

void write_references(const std::string& path,
                      const std::vector<std::string>& ids,
                      const std::vector<std::vector<std::string>>& refs) {
  if (ids.size() != refs.size()) throw DataError("reference ids and rows differ in length");
  std::ofstream o(path);
  if (!o) throw DataError("cannot write file: " + path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    o << ids[i];
    for (const auto& r : refs[i]) o << '\t' << r;
    o << '\n';
  }
}

}  // namespace gatecap
