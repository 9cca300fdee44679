#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace facenet {

/// Flat `key = value` text file. `#` starts a comment; blank lines are ignored.
class KeyValueFile {
 public:
  KeyValueFile() = default;
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Typed reads leave `out` untouched when the key is absent.
  void read(const std::string& key, std::string& out) const;
  void read(const std::string& key, int& out) const;
  void read(const std::string& key, double& out) const;
  void read(const std::string& key, bool& out) const;
  void read(const std::string& key, std::uint64_t& out) const;

  /// Throws ConfigError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  std::string serialize() const;

 private:
  const std::string* find(const std::string& key) const;
  std::string origin_;
  std::map<std::string, std::string> values_;
};

}  // namespace facenet
