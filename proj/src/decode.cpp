#include "gatecap/decode.hpp"

#include <cstdio>
#include <sstream>

namespace gatecap {

DecodedCaption greedy_decode(const Params& params, const Vec& feature, const Vocab& vocab,
                             const PluralMap& plurals, const DecodeOptions& options) {
  if (options.max_len < 1) throw ConfigError("max decode length must be >= 1");
  if (vocab.size() != params.dims.vocab) {
    throw ShapeError("vocabulary size does not match the model");
  }

  Vec img = encode_image(params, feature);
  if (img.norm() == 0.0) {
    throw NumericError("degenerate image: projected feature has zero norm");
  }
  Vec first_input = img / img.norm();

  DecodedCaption out;
  std::vector<bool> suppressed(static_cast<std::size_t>(vocab.size()), false);
  CellState state = initial_state(params);
  Vec input = first_input;

  for (int t = 0; t < options.max_len; ++t) {
    state = decode_step(params, state, input);
    Vec probs;
    double gate = 0.0;
    if (options.gated) {
      auto [g, mix] = gate_step(params, img, state.hidden);
      gate = g;
      probs = token_distribution(params, mix);
    } else {
      probs = token_distribution(params, state.hidden);
    }

    if (options.unique_objects) {
      double remaining = 0.0;
      for (int id = 0; id < vocab.size(); ++id) {
        if (suppressed[static_cast<std::size_t>(id)]) {
          probs[id] = 0.0;
        } else {
          remaining += probs[id];
        }
      }
      if (remaining <= 0.0) {
        throw DecodeError("all tokens suppressed during unique-object decoding");
      }
      probs /= remaining;
    }

    int best = 0;
    for (int id = 1; id < vocab.size(); ++id) {
      if (probs[id] > probs[best]) best = id;
    }
    if (best == vocab.eos_id) break;

    out.token_ids.push_back(best);
    out.tokens.push_back(vocab.token(best));
    if (options.gated) out.gate_trace.push_back(gate);

    if (options.unique_objects && vocab.is_object(best)) {
      suppressed[static_cast<std::size_t>(best)] = true;
      const std::string& word = vocab.token(best);
      for (const std::string& other : {plurals.plural_of(word), plurals.singular_of(word)}) {
        if (other.empty()) continue;
        int other_id = vocab.find(other);
        if (other_id >= 0) suppressed[static_cast<std::size_t>(other_id)] = true;
      }
    }

    input = params.embed_in.col(best);
  }
  return out;
}

std::string format_caption_line(const std::string& id, const DecodedCaption& caption) {
  std::ostringstream out;
  out << id << '\t';
  for (std::size_t i = 0; i < caption.tokens.size(); ++i) {
    out << (i ? " " : "") << caption.tokens[i];
  }
  return out.str();
}

std::string format_gate_trace_line(const std::string& id, const DecodedCaption& caption) {
  std::ostringstream out;
  out << id << '\t';
  char buf[16];
  for (std::size_t i = 0; i < caption.tokens.size(); ++i) {
    double g = i < caption.gate_trace.size() ? caption.gate_trace[i] : 0.0;
    std::snprintf(buf, sizeof(buf), "%.4f", g);
    out << (i ? "," : "") << caption.tokens[i] << ':' << buf;
  }
  return out.str();
}

}  // namespace gatecap
