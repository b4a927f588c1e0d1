#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace bloch {

// Flat key-value configuration: dotted keys, one `key = value` per line,
// '#' comments. Values: number, "string", true/false, [..] lists and
// [[..],[..]] matrices.
class Config {
 public:
  using Value = std::variant<double, bool, std::string, std::vector<double>,
                             std::vector<std::vector<double>>>;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key) const;
  double number_or(const std::string& key, double def) const;
  long integer(const std::string& key) const;
  long integer_or(const std::string& key, long def) const;
  bool flag_or(const std::string& key, bool def) const;
  std::string str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& def) const;
  std::vector<double> list(const std::string& key) const;
  std::vector<double> list_or(const std::string& key,
                              const std::vector<double>& def) const;
  std::vector<std::vector<double>> matrix(const std::string& key) const;
  std::vector<std::vector<double>> matrix_or(const std::string& key) const;

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

  // Canonical text form; parse(serialize()) reproduces values bit-exactly.
  std::string serialize() const;

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  std::map<std::string, Value> values_;
  const Value& get(const std::string& key) const;
};

}  // namespace bloch
