#pragma once

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "common.hpp"

namespace sldmm {

/// Flat run record serialized as sorted `key=value` lines. Doubles are
/// written with 17 significant digits so they parse back bit for bit.
class RunManifest {
public:
  void set(const std::string &key, const std::string &value) {
    require(!key.empty() && key.find_first_of("= \t\r\n") == std::string::npos,
            "RunManifest: invalid key '" + key + "'");
    require(value.find_first_of("\r\n") == std::string::npos,
            "RunManifest: value for '" + key + "' contains a newline");
    entries_[key] = value;
  }
  void set(const std::string &key, const char *value) { set(key, std::string(value)); }
  void set(const std::string &key, double value) { set(key, format(value)); }
  void set(const std::string &key, Index value) { set(key, std::to_string(value)); }
  void set(const std::string &key, int value) { set(key, std::to_string(value)); }
  void set(const std::string &key, unsigned value) { set(key, std::to_string(value)); }
  void set(const std::string &key, bool value) { set(key, value ? "true" : "false"); }

  bool contains(const std::string &key) const { return entries_.count(key) != 0; }
  const std::string &get(const std::string &key) const {
    auto it = entries_.find(key);
    if (it == entries_.end())
      throw std::out_of_range("RunManifest: no key '" + key + "'");
    return it->second;
  }
  double get_double(const std::string &key) const {
    const std::string &v = get(key);
    if (v == "inf")
      return std::numeric_limits<double>::infinity();
    if (v == "-inf")
      return -std::numeric_limits<double>::infinity();
    return std::stod(v);
  }
  const std::map<std::string, std::string> &entries() const { return entries_; }

  void write(std::ostream &os) const {
    for (const auto &[k, v] : entries_)
      os << k << '=' << v << '\n';
  }
  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  static RunManifest parse(std::istream &is) {
    RunManifest m;
    std::string line;
    Index lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty())
        continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0)
        throw IoError("manifest line " + std::to_string(lineno) + ": expected key=value");
      m.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
  }

  static std::string format(double v) {
    if (std::isinf(v))
      return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
  }

  friend bool operator==(const RunManifest &, const RunManifest &) = default;

private:
  std::map<std::string, std::string> entries_;
};

} // namespace sldmm
