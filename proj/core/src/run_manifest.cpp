#include "aftmed/run_manifest.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <utility>

#include "aftmed/errors.hpp"
#include "aftmed/version.hpp"

namespace aftmed {

namespace {

std::string timestamp_utc() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buffer;
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void fnv1a(std::uint64_t& hash, const std::string& text) {
  for (unsigned char byte : text) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  hash ^= static_cast<unsigned char>('\n');
  hash *= 1099511628211ULL;
}

}  // namespace

RunManifest::RunManifest(std::string command)
    : command_(std::move(command)), started_at_(timestamp_utc()) {}

void RunManifest::set_option(const std::string& key, const std::string& value) {
  options_[key] = value;
}

void RunManifest::set_option(const std::string& key, double value) {
  options_[key] = format_double(value);
}

void RunManifest::set_flag(const std::string& key, bool value) {
  options_[key] = value ? "true" : "false";
}

void RunManifest::set_seed(std::uint64_t seed) {
  seed_ = seed;
  seed_set_ = true;
}

void RunManifest::record_nonconvergence(const std::string& stage,
                                        std::uint64_t count) {
  nonconvergence_[stage] = count;
}

void RunManifest::finish() { finished_at_ = timestamp_utc(); }

std::string RunManifest::config_digest() const {
  std::uint64_t hash = 14695981039346656037ULL;
  fnv1a(hash, "command=" + command_);
  for (const auto& [key, value] : options_) {
    fnv1a(hash, key + "=" + value);
  }
  if (seed_set_) {
    fnv1a(hash, "seed=" + std::to_string(seed_));
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx",
                static_cast<unsigned long long>(hash));
  return buffer;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["command"] = command_;
  doc["version"] = kVersion;
  doc["config_digest"] = config_digest();
  if (seed_set_) {
    doc["seed"] = seed_;
  }
  doc["options"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : options_) {
    doc["options"][key] = value;
  }
  doc["nonconvergence"] = nlohmann::ordered_json::object();
  for (const auto& [stage, count] : nonconvergence_) {
    doc["nonconvergence"][stage] = count;
  }
  doc["started_at"] = started_at_;
  if (!finished_at_.empty()) {
    doc["finished_at"] = finished_at_;
  }
  return doc.dump(2);
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open manifest file for writing: " + path);
  }
  out << to_json() << '\n';
  if (!out) {
    throw DataError("failed while writing manifest file: " + path);
  }
}

}  // namespace aftmed
