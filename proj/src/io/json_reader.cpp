#include "epo/io/json_reader.hpp"

namespace epo::io {

namespace {

// Parsed text yields unsigned values; documents built in code may hold
// signed ones.
bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

}  // namespace

const json ObjectReader::kEmpty = json::object();

ObjectReader::ObjectReader(const json& object, std::string path) : obj_(&object), path_(std::move(path)) {
  if (!object.is_object()) {
    throw ConfigError((path_.empty() ? std::string("document") : path_) + ": expected an object");
  }
}

void ObjectReader::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(child_path(key) + ": " + what);
}

const json& ObjectReader::raw(const std::string& key) {
  seen_.insert(key);
  return obj_->at(key);
}

double ObjectReader::number(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_number()) fail(key, "expected a number");
  return v.get<double>();
}

std::uint64_t ObjectReader::unsigned_int(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!non_negative_integer(v)) fail(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool ObjectReader::boolean(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_boolean()) fail(key, "expected true or false");
  return v.get<bool>();
}

std::string ObjectReader::string(const std::string& key, const std::string& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

std::vector<double> ObjectReader::numbers(const std::string& key, const std::vector<double>& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_array()) fail(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail(key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::size_t> ObjectReader::sizes(const std::string& key, const std::vector<std::size_t>& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_array()) fail(key, "expected an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!non_negative_integer(e)) fail(key, "expected an array of non-negative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

ObjectReader ObjectReader::object(const std::string& key) {
  if (!has(key)) return ObjectReader(kEmpty, child_path(key));
  const json& v = raw(key);
  if (!v.is_object()) fail(key, "expected an object");
  return ObjectReader(v, child_path(key));
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : obj_->items()) {
    if (!seen_.count(key)) throw ConfigError(child_path(key) + ": unknown key");
  }
}

}  // namespace epo::io
