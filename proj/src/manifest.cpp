#include "gatecap/manifest.hpp"

#include "gatecap/common.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

namespace gatecap {

RunManifest::RunManifest(std::string command, std::string path)
    : command_(std::move(command)), path_(std::move(path)),
      started_(std::chrono::steady_clock::now()) {}

void RunManifest::set_seed(std::uint64_t seed) { seed_ = seed; }

void RunManifest::set_config(const std::map<std::string, std::string>& config) {
  config_ = config;
}

void RunManifest::add_input(const std::string& path) {
  input_digests_[path] = file_digest(path);
}

void RunManifest::add_output(const std::string& path) { outputs_.push_back(path); }

void RunManifest::write_running() { write("running", 0.0, -1); }

void RunManifest::finalize(int exit_code) {
  double duration =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  write(exit_code == 0 ? "ok" : "failed", duration, exit_code);
}

void RunManifest::write(const std::string& status, double duration_s, int exit_code) const {
  nlohmann::ordered_json doc;
  doc["command"] = command_;
  doc["status"] = status;
  doc["seed"] = seed_;
  doc["config"] = config_;
  doc["inputs"] = input_digests_;
  doc["outputs"] = outputs_;
  doc["duration_s"] = duration_s;
  if (exit_code >= 0) doc["exit_code"] = exit_code;
  std::ofstream out(path_);
  if (!out) throw DataError("cannot write manifest: " + path_);
  out << doc.dump(2) << '\n';
}

}  // namespace gatecap
