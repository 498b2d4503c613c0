#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gatecap {

// Record of one CLI run: config snapshot, seed, input digests, output paths
// and timing. Written with status "running" before the work starts and
// finalized afterwards, so interrupted runs are visible.
class RunManifest {
 public:
  RunManifest(std::string command, std::string path);

  void set_seed(std::uint64_t seed);
  void set_config(const std::map<std::string, std::string>& config);
  void add_input(const std::string& path);   // digests the file now
  void add_output(const std::string& path);

  void write_running();
  void finalize(int exit_code);

 private:
  void write(const std::string& status, double duration_s, int exit_code) const;

  std::string command_;
  std::string path_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::string> input_digests_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace gatecap
