#pragma once

#include "gatecap/model.hpp"

#include <string>

namespace gatecap {

// Binary model dump: 8-byte magic, format version, cell kind, gated flag,
// dims, vocab hash, then every tensor row-major. Loading rejects files whose
// vocab hash differs from the vocabulary in use.
void save_checkpoint(const std::string& path, const Params& params,
                     std::uint64_t vocab_hash, bool gated);

struct LoadedCheckpoint {
  Params params;
  bool gated = true;
};

LoadedCheckpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash);

}  // namespace gatecap
