#include "gatecap/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace gatecap {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'A', 'P', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint truncated while reading " + what);
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Params& params,
                     std::uint64_t vocab_hash, bool gated) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(params.dims.cell == CellKind::Lstm ? 1 : 0));
  put(out, static_cast<std::uint32_t>(gated ? 1 : 0));
  put(out, static_cast<std::int32_t>(params.dims.hidden));
  put(out, static_cast<std::int32_t>(params.dims.feature));
  put(out, static_cast<std::int32_t>(params.dims.vocab));
  put(out, vocab_hash);
  for (const auto& ref : params.tensors()) {
    const Mat& m = *ref.tensor;
    put(out, static_cast<std::uint32_t>(m.rows()));
    put(out, static_cast<std::uint32_t>(m.cols()));
    for (long r = 0; r < m.rows(); ++r) {
      for (long c = 0; c < m.cols(); ++c) put(out, m(r, c));
    }
  }
  if (!out) throw DataError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  auto cell = get<std::uint32_t>(in, "cell kind");
  auto gated = get<std::uint32_t>(in, "gated flag");
  ModelDims dims;
  dims.cell = cell == 1 ? CellKind::Lstm : CellKind::Gru;
  dims.hidden = get<std::int32_t>(in, "hidden dim");
  dims.feature = get<std::int32_t>(in, "feature dim");
  dims.vocab = get<std::int32_t>(in, "vocab size");
  auto vocab_hash = get<std::uint64_t>(in, "vocab hash");
  if (vocab_hash != expected_vocab_hash) {
    throw DataError("checkpoint vocabulary hash mismatch; rebuild the vocab with the "
                    "same corpus and settings used at training time");
  }

  LoadedCheckpoint loaded;
  loaded.gated = gated == 1;
  loaded.params = Params::init(dims, 0);
  for (auto& ref : loaded.params.tensors()) {
    auto rows = get<std::uint32_t>(in, ref.name + " rows");
    auto cols = get<std::uint32_t>(in, ref.name + " cols");
    if (rows != static_cast<std::uint32_t>(ref.tensor->rows()) ||
        cols != static_cast<std::uint32_t>(ref.tensor->cols())) {
      throw DataError("checkpoint tensor " + ref.name + " has unexpected shape");
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        (*ref.tensor)(r, c) = get<double>(in, ref.name);
      }
    }
  }
  return loaded;
}

}  // namespace gatecap
