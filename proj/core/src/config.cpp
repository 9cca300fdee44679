#include "facenet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "facenet/errors.hpp"

namespace facenet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (kv.values_.count(key)) throw ConfigError(origin + ": duplicate key '" + key + "'");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* KeyValueFile::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void KeyValueFile::read(const std::string& key, std::string& out) const {
  if (auto v = find(key)) out = *v;
}

namespace {
template <class T>
void parse_number(const std::string& origin, const std::string& key, const std::string& text, T& out) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(origin + ": key '" + key + "' has invalid value '" + text + "'");
  }
  out = value;
}
}  // namespace

void KeyValueFile::read(const std::string& key, int& out) const {
  if (auto v = find(key)) parse_number(origin_, key, *v, out);
}

void KeyValueFile::read(const std::string& key, double& out) const {
  if (auto v = find(key)) parse_number(origin_, key, *v, out);
}

void KeyValueFile::read(const std::string& key, std::uint64_t& out) const {
  if (auto v = find(key)) parse_number(origin_, key, *v, out);
}

void KeyValueFile::read(const std::string& key, bool& out) const {
  auto v = find(key);
  if (!v) return;
  if (*v == "true" || *v == "1" || *v == "on") {
    out = true;
  } else if (*v == "false" || *v == "0" || *v == "off") {
    out = false;
  } else {
    throw ConfigError(origin_ + ": key '" + key + "' expects a boolean, got '" + *v + "'");
  }
}

void KeyValueFile::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, _] : values_) {
    if (!known.count(k)) throw ConfigError(origin_ + ": unknown key '" + k + "'");
  }
}

std::string KeyValueFile::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

}  // namespace facenet
