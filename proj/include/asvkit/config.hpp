#pragma once

#include <map>
#include <string>
#include <vector>

namespace asv {

/// Flat `key = value` text: one pair per line, `#` starts a comment,
/// blank lines ignored.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value);

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  long long get(const std::string& key, long long fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_list(const std::string& key,
                                    std::vector<std::size_t> fallback) const;

  /// Keys never read by any getter, for typo detection.
  std::vector<std::string> unused() const;
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

}  // namespace asv
