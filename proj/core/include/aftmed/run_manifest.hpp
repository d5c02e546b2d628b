#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace aftmed {

// Provenance record emitted next to every command-line result: which command
// ran, its effective configuration, the seed, wall-clock bounds, and any
// nonconvergence tallies. The configuration digest is a 64-bit FNV-1a hash
// over the command name and the sorted option pairs, so logically identical
// runs share a digest no matter how the options were ordered. Timestamps are
// recorded for audit only; output reproducibility is defined over the data
// files, not over the manifest clock fields.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_option(const std::string& key, const std::string& value);
  void set_option(const std::string& key, double value);
  void set_flag(const std::string& key, bool value);
  void set_seed(std::uint64_t seed);
  void record_nonconvergence(const std::string& stage, std::uint64_t count);

  // Stamps the end-of-run timestamp; call once just before writing.
  void finish();

  const std::string& command() const { return command_; }
  std::string config_digest() const;  // 16 lowercase hex characters
  std::string to_json() const;
  void write(const std::string& path) const;

 private:
  std::string command_;
  std::map<std::string, std::string> options_;
  std::map<std::string, std::uint64_t> nonconvergence_;
  std::uint64_t seed_ = 0;
  bool seed_set_ = false;
  std::string started_at_;
  std::string finished_at_;
};

}  // namespace aftmed
