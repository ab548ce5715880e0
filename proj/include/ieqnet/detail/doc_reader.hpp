#pragma once

// Strict reader for YAML configuration documents. Every accessor records the
// key it consumed; finish() rejects keys nobody asked for, so a misspelled
// field is reported by name instead of being silently ignored.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ios>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ieqnet {

/// Validation failure inside a structured document. `path` is a dotted path
/// into the document (e.g. `links[2].a.node`), `line` is 1-based or 0 when
/// unknown.
class DocumentError : public std::runtime_error {
public:
  DocumentError(std::string path, int line, const std::string& what)
      : std::runtime_error(format(path, line, what)), path_(std::move(path)), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  int line() const noexcept { return line_; }

private:
  static std::string format(const std::string& path, int line, const std::string& what) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!path.empty()) out += path + ": ";
    return out + what;
  }

  std::string path_;
  int line_;
};

/// Reads a whole file; throws std::ios_base::failure when unreadable.
inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline int line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

inline YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw DocumentError("", e.mark.line >= 0 ? e.mark.line + 1 : 0, "parse error: " + e.msg);
  }
}

inline std::string child_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

inline std::string index_path(const std::string& parent, std::size_t i) {
  return parent + "[" + std::to_string(i) + "]";
}

class MapReader {
public:
  MapReader(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) fail("expected a map");
  }

  const std::string& path() const { return path_; }
  int line() const { return line_of(node_); }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    auto child = node_[key];
    if (!child) {
      for (const auto& kv : node_) {
        const auto other = kv.first.as<std::string>();
        if (near_miss(other, key))
          throw DocumentError(child_path(path_, other), line_of(kv.first),
                              "unknown field '" + other + "' (did you mean '" + key + "'?)");
      }
      fail("missing required field '" + key + "'");
    }
    return child;
  }

  YAML::Node get_optional(const std::string& key) {
    seen_.insert(key);
    return node_[key];
  }

  std::string string(const std::string& key) { return as_string(get(key), child_path(path_, key)); }

  std::string string_or(const std::string& key, std::string fallback) {
    auto n = get_optional(key);
    return n ? as_string(n, child_path(path_, key)) : std::move(fallback);
  }

  double number(const std::string& key) { return as_number(get(key), child_path(path_, key)); }

  double number_or(const std::string& key, double fallback) {
    auto n = get_optional(key);
    return n ? as_number(n, child_path(path_, key)) : fallback;
  }

  long long integer(const std::string& key) { return as_integer(get(key), child_path(path_, key)); }

  long long integer_or(const std::string& key, long long fallback) {
    auto n = get_optional(key);
    return n ? as_integer(n, child_path(path_, key)) : fallback;
  }

  bool boolean_or(const std::string& key, bool fallback) {
    auto n = get_optional(key);
    if (!n) return fallback;
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      throw DocumentError(child_path(path_, key), line_of(n), "expected a boolean");
    }
  }

  MapReader map(const std::string& key) { return MapReader(get(key), child_path(path_, key)); }

  std::optional<MapReader> map_optional(const std::string& key) {
    auto n = get_optional(key);
    if (!n) return std::nullopt;
    return MapReader(n, child_path(path_, key));
  }

  /// Sequence under `key`; a missing key yields an empty list.
  std::vector<std::pair<YAML::Node, std::string>> sequence(const std::string& key) {
    auto n = get_optional(key);
    std::vector<std::pair<YAML::Node, std::string>> out;
    if (!n || n.IsNull()) return out;
    const auto p = child_path(path_, key);
    if (!n.IsSequence()) throw DocumentError(p, line_of(n), "expected a list");
    for (std::size_t i = 0; i < n.size(); ++i) out.emplace_back(n[i], index_path(p, i));
    return out;
  }

  /// Rejects any key that was never read.
  void finish() const {
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        throw DocumentError(child_path(path_, key), line_of(kv.first), "unknown field '" + key + "'");
      }
    }
  }

  /// Edit distance of at most two, for misspelling hints.
  static bool near_miss(const std::string& a, const std::string& b) {
    if (a == b || (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()) > 2) return false;
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= b.size(); ++j)
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
      std::swap(prev, cur);
    }
    return prev[b.size()] <= 2;
  }

  [[noreturn]] void fail(const std::string& what) const { throw DocumentError(path_, line_of(node_), what); }

  static std::string as_string(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw DocumentError(path, line_of(n), "expected a string");
    return n.Scalar();
  }

  static double as_number(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw DocumentError(path, line_of(n), "expected a number");
    const auto& s = n.Scalar();
    if (s == "-inf" || s == "-.inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DocumentError(path, line_of(n), "expected a number, got '" + s + "'");
    }
  }

  static long long as_integer(const YAML::Node& n, const std::string& path) {
    const double v = as_number(n, path);
    if (!std::isfinite(v) || std::floor(v) != v) throw DocumentError(path, line_of(n), "expected an integer");
    return static_cast<long long>(v);
  }

private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail
}  // namespace ieqnet
