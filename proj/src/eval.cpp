#include "gatecap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <unordered_map>

namespace gatecap {

namespace {

// n-grams as '\x1f'-joined keys; cheap and collision-free for real tokens.
std::unordered_map<std::string, long> ngram_counts(const std::vector<std::string>& tokens,
                                                   int n) {
  std::unordered_map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

std::set<std::string> to_word_set(const std::vector<std::string>& tokens, bool keep_punct) {
  std::set<std::string> out;
  for (const auto& t : tokens) {
    if (!keep_punct && is_punct_token(t)) continue;
    out.insert(t);
  }
  return out;
}

long intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  long n = 0;
  for (const auto& x : a) n += b.count(x) > 0 ? 1 : 0;
  return n;
}

struct PairScore {
  double p = 0, r = 0, f = 0;
  bool scorable = false;
};

PairScore score_pair(const std::set<std::string>& cand, const std::set<std::string>& ref) {
  PairScore s;
  if (ref.empty()) return s;  // excluded from the average
  s.scorable = true;
  long overlap = intersection_size(cand, ref);
  s.p = cand.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(cand.size());
  s.r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  s.f = (s.p + s.r) > 0.0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
  return s;
}

}  // namespace

BleuAccumulator::BleuAccumulator(int max_n) : max_n_(max_n) {
  if (max_n < 1) throw ConfigError("BLEU max_n must be >= 1");
  matched_.assign(static_cast<std::size_t>(max_n), 0);
  total_.assign(static_cast<std::size_t>(max_n), 0);
}

void BleuAccumulator::add(const std::vector<std::string>& candidate,
                          const std::vector<std::vector<std::string>>& references) {
  if (references.empty()) throw DataError("BLEU requires at least one reference");
  long cand_len = static_cast<long>(candidate.size());
  candidate_len_ += cand_len;

  // Closest reference length; ties go to the shorter reference.
  long best_ref = static_cast<long>(references[0].size());
  for (const auto& ref : references) {
    long len = static_cast<long>(ref.size());
    long diff = std::abs(len - cand_len);
    long best_diff = std::abs(best_ref - cand_len);
    if (diff < best_diff || (diff == best_diff && len < best_ref)) best_ref = len;
  }
  reference_len_ += best_ref;

  for (int n = 1; n <= max_n_; ++n) {
    auto cand_counts = ngram_counts(candidate, n);
    std::unordered_map<std::string, long> max_ref_counts;
    for (const auto& ref : references) {
      for (const auto& [gram, count] : ngram_counts(ref, n)) {
        long& slot = max_ref_counts[gram];
        slot = std::max(slot, count);
      }
    }
    long matched = 0;
    long total = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = max_ref_counts.find(gram);
      if (it != max_ref_counts.end()) matched += std::min(count, it->second);
    }
    matched_[static_cast<std::size_t>(n - 1)] += matched;
    total_[static_cast<std::size_t>(n - 1)] += total;
  }
}

std::vector<double> BleuAccumulator::scores() const {
  std::vector<double> out(static_cast<std::size_t>(max_n_), 0.0);
  if (candidate_len_ == 0) return out;
  double brevity = 1.0;
  if (candidate_len_ < reference_len_) {
    brevity = std::exp(1.0 - static_cast<double>(reference_len_) /
                                 static_cast<double>(candidate_len_));
  }
  for (int k = 1; k <= max_n_; ++k) {
    double log_sum = 0.0;
    int used = 0;
    bool zero = false;
    for (int n = 1; n <= k; ++n) {
      long total = total_[static_cast<std::size_t>(n - 1)];
      long matched = matched_[static_cast<std::size_t>(n - 1)];
      if (total == 0) continue;  // no n-grams of this order anywhere
      if (matched == 0) {
        zero = true;
        break;
      }
      log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
      ++used;
    }
    if (zero || used == 0) {
      out[static_cast<std::size_t>(k - 1)] = 0.0;
    } else {
      out[static_cast<std::size_t>(k - 1)] =
          brevity * std::exp(log_sum / static_cast<double>(used));
    }
  }
  return out;
}

std::vector<double> bleu(const std::vector<std::string>& candidate,
                         const std::vector<std::vector<std::string>>& references,
                         int max_n) {
  BleuAccumulator acc(max_n);
  acc.add(candidate, references);
  return acc.scores();
}

BowResult bow_scores(const std::vector<std::string>& candidate,
                     const std::vector<std::vector<std::string>>& references,
                     const std::set<std::string>& object_words, bool keep_punct) {
  BowAccumulator acc;
  acc.add(candidate, references, object_words, keep_punct);
  return acc.joint();
}

void BowAccumulator::add(const std::vector<std::string>& candidate,
                         const std::vector<std::vector<std::string>>& references,
                         const std::set<std::string>& object_words, bool keep_punct) {
  if (references.empty()) throw DataError("bow scoring requires at least one reference");
  std::set<std::string> cand = to_word_set(candidate, keep_punct);
  std::set<std::string> cand_det, cand_other;
  for (const auto& w : cand) {
    (object_words.count(w) > 0 ? cand_det : cand_other).insert(w);
  }

  struct ImageSums {
    double p = 0, r = 0, f = 0;
    long n = 0;
  } image_det, image_other;

  for (const auto& ref_tokens : references) {
    std::set<std::string> ref = to_word_set(ref_tokens, keep_punct);
    std::set<std::string> ref_det, ref_other;
    for (const auto& w : ref) {
      (object_words.count(w) > 0 ? ref_det : ref_other).insert(w);
    }
    PairScore det = score_pair(cand_det, ref_det);
    if (det.scorable) {
      detected_.p += det.p;
      detected_.r += det.r;
      detected_.f += det.f;
      ++detected_.n;
      image_det.p += det.p;
      image_det.r += det.r;
      image_det.f += det.f;
      ++image_det.n;
    }
    PairScore oth = score_pair(cand_other, ref_other);
    if (oth.scorable) {
      others_.p += oth.p;
      others_.r += oth.r;
      others_.f += oth.f;
      ++others_.n;
      image_other.p += oth.p;
      image_other.r += oth.r;
      image_other.f += oth.f;
      ++image_other.n;
    }
  }

  if (image_det.n > 0) {
    detected_.image_p_sum += image_det.p / static_cast<double>(image_det.n);
    detected_.image_r_sum += image_det.r / static_cast<double>(image_det.n);
    detected_.image_f_sum += image_det.f / static_cast<double>(image_det.n);
    ++detected_.n_images;
  }
  if (image_other.n > 0) {
    others_.image_p_sum += image_other.p / static_cast<double>(image_other.n);
    others_.image_r_sum += image_other.r / static_cast<double>(image_other.n);
    others_.image_f_sum += image_other.f / static_cast<double>(image_other.n);
    ++others_.n_images;
  }
}

BowResult BowAccumulator::joint() const {
  BowResult out;
  auto fill = [](const GroupSums& sums, PRFReport& report) {
    report.n_pairs = sums.n;
    if (sums.n == 0) return;
    double n = static_cast<double>(sums.n);
    report.precision = sums.p / n;
    report.recall = sums.r / n;
    report.f1 = sums.f / n;
  };
  fill(detected_, out.detected);
  fill(others_, out.others);
  return out;
}

BowResult BowAccumulator::per_image() const {
  BowResult out;
  auto fill = [](const GroupSums& sums, PRFReport& report) {
    report.n_pairs = sums.n_images;
    if (sums.n_images == 0) return;
    double n = static_cast<double>(sums.n_images);
    report.precision = sums.image_p_sum / n;
    report.recall = sums.image_r_sum / n;
    report.f1 = sums.image_f_sum / n;
  };
  fill(detected_, out.detected);
  fill(others_, out.others);
  return out;
}

FreqAnalysis frequency_analysis(const std::vector<std::vector<std::string>>& captions,
                                const std::map<std::string, long>& corpus_counts,
                                const std::set<std::string>& categories,
                                const PluralMap& plurals, bool keep_punct) {
  std::set<std::string> unique;
  for (const auto& caption : captions) {
    for (const auto& word : caption) {
      if (!keep_punct && is_punct_token(word)) continue;
      unique.insert(word);
    }
  }

  FreqAnalysis out;
  double object_sum = 0.0;
  double other_sum = 0.0;
  for (const auto& word : unique) {
    bool is_object =
        categories.count(word) > 0 || categories.count(plurals.singular_of(word)) > 0;
    auto it = corpus_counts.find(word);
    long freq = it == corpus_counts.end() ? 0 : it->second;
    FreqReport& group = is_object ? out.object : out.others;
    ++group.word_type;
    if (it == corpus_counts.end()) ++group.missing;
    (is_object ? object_sum : other_sum) += static_cast<double>(freq);
  }
  if (out.object.word_type > 0) {
    out.object.mean_frequency = object_sum / static_cast<double>(out.object.word_type);
  }
  if (out.others.word_type > 0) {
    out.others.mean_frequency = other_sum / static_cast<double>(out.others.word_type);
  }
  return out;
}

EvalReport evaluate_set(const Params& params, const EvalInputs& inputs,
                        const DecodeOptions& decode_options, bool keep_punct, int threads) {
  const auto& images = *inputs.images;
  const auto& references = *inputs.references;
  if (images.size() != references.size()) {
    throw DataError("evaluation images and reference rows differ in count");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw DataError("every evaluation image needs at least one reference");
  }

  EvalReport report;
  report.n_images = static_cast<long>(images.size());
  report.captions.resize(images.size());

  auto decode_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      report.captions[i] =
          greedy_decode(params, images[i].feature, *inputs.vocab, *inputs.plurals,
                        decode_options);
    }
  };
  if (threads <= 1 || images.size() < 2) {
    decode_range(0, images.size());
  } else {
    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), images.size());
    std::vector<std::thread> pool;
    std::size_t chunk = (images.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      std::size_t begin = t * chunk;
      std::size_t end = std::min(images.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(decode_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  BleuAccumulator bleu_acc(4);
  BowAccumulator bow_acc;
  std::vector<std::vector<std::string>> caption_tokens;
  double gate_object_sum = 0.0, gate_other_sum = 0.0;

  for (std::size_t i = 0; i < images.size(); ++i) {
    const DecodedCaption& caption = report.captions[i];
    std::vector<std::vector<std::string>> ref_tokens;
    for (const auto& raw : references[i]) ref_tokens.push_back(tokenize(raw));
    bleu_acc.add(caption.tokens, ref_tokens);

    // Detected labels expanded with their plural forms for word matching.
    std::set<std::string> object_words;
    for (const auto& label : images[i].detected) {
      object_words.insert(label);
      std::string plural = inputs.plurals->plural_of(label);
      if (!plural.empty()) object_words.insert(plural);
    }
    bow_acc.add(caption.tokens, ref_tokens, object_words, keep_punct);
    caption_tokens.push_back(caption.tokens);

    for (std::size_t t = 0; t < caption.gate_trace.size(); ++t) {
      bool object_pos = object_words.count(caption.tokens[t]) > 0;
      if (object_pos) {
        gate_object_sum += caption.gate_trace[t];
        ++report.gate.n_object;
      } else {
        gate_other_sum += caption.gate_trace[t];
        ++report.gate.n_other;
      }
    }
  }

  report.bleu = bleu_acc.scores();
  report.bow_joint = bow_acc.joint();
  report.bow_per_image = bow_acc.per_image();
  report.frequency = frequency_analysis(caption_tokens, inputs.corpus_counts,
                                        *inputs.categories, *inputs.plurals, keep_punct);
  if (report.gate.n_object > 0) {
    report.gate.mean_object = gate_object_sum / static_cast<double>(report.gate.n_object);
  }
  if (report.gate.n_other > 0) {
    report.gate.mean_other = gate_other_sum / static_cast<double>(report.gate.n_other);
  }
  return report;
}

}  // namespace gatecap
