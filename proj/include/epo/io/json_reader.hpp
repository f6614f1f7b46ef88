#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace epo::io {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict view of a JSON object: every key must be read exactly once or
/// finish() reports it as unknown. Errors carry the dotted key path.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path);

  bool has(const std::string& key) const { return obj_->contains(key); }
  const json& raw(const std::string& key);
  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback);
  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string string(const std::string& key, const std::string& fallback);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::size_t> sizes(const std::string& key, const std::vector<std::size_t>& fallback);
  /// Nested object; an absent key yields an empty object.
  ObjectReader object(const std::string& key);

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

 private:
  const json* obj_;
  std::string path_;
  std::set<std::string> seen_;
  static const json kEmpty;
};

}  // namespace epo::io
