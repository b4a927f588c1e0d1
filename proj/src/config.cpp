#include "bloch/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bloch {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& tok, const std::string& key) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': bad number '" + tok + "'");
  }
  if (trim(tok.substr(pos)) != "")
    throw std::runtime_error("config: key '" + key + "': trailing junk in '" + tok + "'");
  return v;
}

// split a bracketed list body on top-level commas
std::vector<std::string> split_top(const std::string& body, const std::string& key) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char c : body) {
    if (c == '[') depth++;
    if (c == ']') depth--;
    if (depth < 0) throw std::runtime_error("config: key '" + key + "': bracket mismatch");
    if (c == ',' && depth == 0) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (trim(cur) != "") parts.push_back(trim(cur));
  if (depth != 0) throw std::runtime_error("config: key '" + key + "': bracket mismatch");
  return parts;
}

Config::Value parse_value(const std::string& raw, const std::string& key) {
  std::string v = trim(raw);
  if (v.empty()) throw std::runtime_error("config: key '" + key + "': empty value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw std::runtime_error("config: key '" + key + "': unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']')
      throw std::runtime_error("config: key '" + key + "': unterminated list");
    std::vector<std::string> parts = split_top(v.substr(1, v.size() - 2), key);
    bool nested = false;
    for (const auto& pstr : parts)
      if (!pstr.empty() && pstr.front() == '[') nested = true;
    if (nested) {
      std::vector<std::vector<double>> rows;
      for (const auto& pstr : parts) {
        if (pstr.empty() || pstr.front() != '[' || pstr.back() != ']')
          throw std::runtime_error("config: key '" + key + "': ragged matrix");
        std::vector<double> row;
        for (const auto& e : split_top(pstr.substr(1, pstr.size() - 2), key))
          row.push_back(parse_number(e, key));
        rows.push_back(std::move(row));
      }
      return rows;
    }
    std::vector<double> xs;
    for (const auto& pstr : parts) xs.push_back(parse_number(pstr, key));
    return xs;
  }
  return parse_number(v, key);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside strings
    bool instr = false;
    std::string clean;
    for (char c : line) {
      if (c == '"') instr = !instr;
      if (c == '#' && !instr) break;
      clean += c;
    }
    clean = trim(clean);
    if (clean.empty()) continue;
    size_t eq = clean.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    std::string key = trim(clean.substr(0, eq));
    if (key.empty())
      throw std::runtime_error("config: line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = parse_value(clean.substr(eq + 1), key);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

const Config::Value& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("config: missing required key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  const Value& v = get(key);
  if (const double* d = std::get_if<double>(&v)) return *d;
  throw std::runtime_error("config: key '" + key + "' is not a number");
}

double Config::number_or(const std::string& key, double def) const {
  return has(key) ? number(key) : def;
}

long Config::integer(const std::string& key) const {
  double d = number(key);
  long l = std::lround(d);
  if (d != static_cast<double>(l))
    throw std::runtime_error("config: key '" + key + "' is not an integer");
  return l;
}

long Config::integer_or(const std::string& key, long def) const {
  return has(key) ? integer(key) : def;
}

bool Config::flag_or(const std::string& key, bool def) const {
  if (!has(key)) return def;
  const Value& v = get(key);
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  throw std::runtime_error("config: key '" + key + "' is not a boolean");
}

std::string Config::str(const std::string& key) const {
  const Value& v = get(key);
  if (const std::string* s = std::get_if<std::string>(&v)) return *s;
  throw std::runtime_error("config: key '" + key + "' is not a string");
}

std::string Config::str_or(const std::string& key, const std::string& def) const {
  return has(key) ? str(key) : def;
}

std::vector<double> Config::list(const std::string& key) const {
  const Value& v = get(key);
  if (const auto* xs = std::get_if<std::vector<double>>(&v)) return *xs;
  if (const double* d = std::get_if<double>(&v)) return {*d};
  throw std::runtime_error("config: key '" + key + "' is not a list");
}

std::vector<double> Config::list_or(const std::string& key,
                                    const std::vector<double>& def) const {
  return has(key) ? list(key) : def;
}

std::vector<std::vector<double>> Config::matrix(const std::string& key) const {
  const Value& v = get(key);
  if (const auto* m = std::get_if<std::vector<std::vector<double>>>(&v)) return *m;
  throw std::runtime_error("config: key '" + key + "' is not a matrix");
}

std::vector<std::vector<double>> Config::matrix_or(const std::string& key) const {
  return has(key) ? matrix(key) : std::vector<std::vector<double>>{};
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key + " = ";
    if (const double* d = std::get_if<double>(&value)) {
      out += format_number(*d);
    } else if (const bool* b = std::get_if<bool>(&value)) {
      out += *b ? "true" : "false";
    } else if (const std::string* s = std::get_if<std::string>(&value)) {
      out += '"' + *s + '"';
    } else if (const auto* xs = std::get_if<std::vector<double>>(&value)) {
      out += '[';
      for (size_t i = 0; i < xs->size(); ++i)
        out += (i ? ", " : "") + format_number((*xs)[i]);
      out += ']';
    } else if (const auto* m = std::get_if<std::vector<std::vector<double>>>(&value)) {
      out += '[';
      for (size_t r = 0; r < m->size(); ++r) {
        out += r ? ", [" : "[";
        for (size_t i = 0; i < (*m)[r].size(); ++i)
          out += (i ? ", " : "") + format_number((*m)[r][i]);
        out += ']';
      }
      out += ']';
    }
    out += '\n';
  }
  return out;
}

}  // namespace bloch
