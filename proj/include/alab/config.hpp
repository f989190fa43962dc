#ifndef ALAB_CONFIG_HPP_
#define ALAB_CONFIG_HPP_

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace alab {

// Flat `key = value` text config. Blank lines and lines starting with '#'
// are ignored. Later keys override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in);
  static KeyValues parse_string(const std::string& text);
  static KeyValues load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace alab

#endif  // ALAB_CONFIG_HPP_
