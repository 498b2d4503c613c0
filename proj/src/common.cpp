#include "gatecap/common.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gatecap {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return to_hex(fnv1a(ss.str()));
}

bool is_punct_token(std::string_view token) {
  if (token.empty()) return false;
  for (unsigned char c : token) {
    if (c >= 0x80 || !std::ispunct(c)) return false;
  }
  return true;
}

}  // namespace gatecap
