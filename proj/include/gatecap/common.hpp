#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gatecap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error categories. The CLI maps them onto exit codes:
// config/usage -> 2, data -> 3, numeric -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : DataError {
  using DataError::DataError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DecodeError : NumericError {
  using NumericError::NumericError;
};

// Wrapper around a single 64-bit Mersenne twister. Every random draw in the
// project flows through one of these, seeded from a single --seed value, so
// serial runs are bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }

  bool bernoulli(double p) { return std::bernoulli_distribution(p)(eng_); }

  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<int>(mean)(eng_);
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    std::shuffle(items.begin(), items.end(), eng_);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// FNV-1a over arbitrary bytes; used for vocab hashes and file digests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

// Hex rendering of a 64-bit digest.
std::string to_hex(std::uint64_t value);

// Digest of a file's raw bytes; throws DataError if the file cannot be read.
std::string file_digest(const std::string& path);

// True when every character of the token is ASCII punctuation.
bool is_punct_token(std::string_view token);

}  // namespace gatecap
