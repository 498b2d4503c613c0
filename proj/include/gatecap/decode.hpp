#pragma once

#include "gatecap/model.hpp"

#include <string>
#include <vector>

namespace gatecap {

struct DecodedCaption {
  std::vector<std::string> tokens;    // eos excluded
  std::vector<int> token_ids;
  std::vector<double> gate_trace;     // per emitted token; empty in ungated mode
};

struct DecodeOptions {
  int max_len = 20;
  bool unique_objects = true;  // suppress already-emitted object-category words
  bool gated = true;
};

// Greedy decoding. At each step the argmax token is emitted (ties go to the
// lowest id); with unique_objects on, an emitted object-category token and
// its plural/singular counterpart get probability zero at all later steps,
// with the remaining mass renormalized. Stops at eos or max_len.
DecodedCaption greedy_decode(const Params& params, const Vec& feature, const Vocab& vocab,
                             const PluralMap& plurals, const DecodeOptions& options);

// "id<TAB>caption text"
std::string format_caption_line(const std::string& id, const DecodedCaption& caption);
// "id<TAB>token:g,token:g,..." with gates to 4 decimals.
std::string format_gate_trace_line(const std::string& id, const DecodedCaption& caption);

}  // namespace gatecap
