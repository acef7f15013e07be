#include "hec/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hec/error.hpp"

namespace hec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::kInvalidArgument,
            origin + ":" + std::to_string(lineno) + ": expected key=value");
    kv.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kNotFound, "missing config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValues::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write config " + path.string());
  os << to_string();
}

std::string KeyValues::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void KeyValues::set(const std::string& key, double value) { values_[key] = format_double(value); }
void KeyValues::set(const std::string& key, std::int64_t value) {
  values_[key] = std::to_string(value);
}
void KeyValues::set(const std::string& key, std::uint64_t value) {
  values_[key] = std::to_string(value);
}

std::string KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::kInvalidArgument,
          origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& text, const std::string& key, const std::string& origin) {
  T value{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, value);
  require(res.ec == std::errc() && res.ptr == end, ErrorKind::kInvalidArgument,
          origin + ": key '" + key + "' has malformed value '" + text + "'");
  return value;
}

}  // namespace

double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_number<double>(get(key), key, origin_) : fallback;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? parse_number<std::int64_t>(get(key), key, origin_) : fallback;
}

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_number<std::uint64_t>(get(key), key, origin_) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::kInvalidArgument, origin_ + ": key '" + key + "' is not a boolean");
}

std::vector<std::string> KeyValues::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace hec
