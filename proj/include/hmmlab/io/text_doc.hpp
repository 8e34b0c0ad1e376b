#pragma once

#include "hmmlab/core.hpp"

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hmmlab::io {

// Versioned text document:
//
//   format_version 1
//   doc <kind>
//   attr <key> <value to end of line>
//   tensor <name> <rows> <cols>
//   <rows * cols row-major values, %.17g, space separated>
//   end
//
// 17 significant digits round-trip every double exactly.
inline constexpr int kFormatVersion = 1;

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Tensor {
  std::string name;
  Matrix value;
};

struct TextDoc {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<Tensor> tensors;

  void set(const std::string& key, const std::string& value) {
    require(key.find_first_of(" \t\n") == std::string::npos && !key.empty(), "attribute keys must be single words");
    require(value.find('\n') == std::string::npos, "attribute values must be single-line");
    for (auto& kv : attrs)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    attrs.emplace_back(key, value);
  }
  void set(const std::string& key, double v) { set(key, fmt17(v)); }
  void set(const std::string& key, int v) { set(key, std::to_string(v)); }
  void set(const std::string& key, long v) { set(key, std::to_string(v)); }
  void set(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }
  void set(const std::string& key, bool v) { set(key, std::string(v ? "true" : "false")); }
  void set(const std::string& key, const char* v) { set(key, std::string(v)); }

  bool has(const std::string& key) const {
    for (const auto& kv : attrs)
      if (kv.first == key) return true;
    return false;
  }
  const std::string& get(const std::string& key) const {
    for (const auto& kv : attrs)
      if (kv.first == key) return kv.second;
    throw FormatError("document '" + kind + "' lacks attribute '" + key + "'");
  }
  std::string get_or(const std::string& key, const std::string& fallback) const { return has(key) ? get(key) : fallback; }
  double get_double(const std::string& key) const;
  long get_long(const std::string& key) const;
  int get_int(const std::string& key) const { return static_cast<int>(get_long(key)); }
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw FormatError("attribute '" + key + "' is not a boolean: " + v);
  }

  void add(const std::string& name, const Matrix& m) {
    require(name.find_first_of(" \t\n") == std::string::npos && !name.empty(), "tensor names must be single words");
    tensors.push_back({name, m});
  }
  bool has_tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
  const Matrix& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.value;
    throw FormatError("document '" + kind + "' lacks tensor '" + name + "'");
  }
  const Matrix& tensor(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
    const Matrix& m = tensor(name);
    if (m.rows() != rows || m.cols() != cols)
      throw FormatError("tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                        ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    return m;
  }
  void expect_kind(const std::string& k) const {
    if (kind != k) throw FormatError("expected a '" + k + "' document, found '" + kind + "'");
  }
};

namespace detail {

inline double parse_double(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  // strtod flags subnormal results with ERANGE too; only overflow is an error.
  if (s.empty() || end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v)))
    throw FormatError("cannot parse number '" + s + "' in " + what);
  return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw FormatError("cannot parse integer '" + s + "' in " + what);
  return v;
}

}  // namespace detail

inline double TextDoc::get_double(const std::string& key) const { return detail::parse_double(get(key), "attribute " + key); }
inline long TextDoc::get_long(const std::string& key) const { return detail::parse_long(get(key), "attribute " + key); }
inline std::uint64_t TextDoc::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || s[0] == '-')
    throw FormatError("cannot parse unsigned integer '" + s + "' in attribute " + key);
  return static_cast<std::uint64_t>(v);
}

inline std::string to_text(const TextDoc& d) {
  std::string s = "format_version " + std::to_string(kFormatVersion) + "\n";
  s += "doc " + d.kind + "\n";
  for (const auto& [k, v] : d.attrs) s += "attr " + k + " " + v + "\n";
  for (const auto& t : d.tensors) {
    s += "tensor " + t.name + " " + std::to_string(t.value.rows()) + " " + std::to_string(t.value.cols()) + "\n";
    bool first = true;
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
        if (!first) s += ' ';
        s += fmt17(t.value(i, j));
        first = false;
      }
    s += "\n";
  }
  s += "end\n";
  return s;
}

inline TextDoc parse_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&lineno](const std::string& msg) -> FormatError {
    return FormatError("line " + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next()) throw fail("empty document");
  {
    std::istringstream ls(line);
    std::string tag;
    long v = 0;
    if (!(ls >> tag >> v) || tag != "format_version") throw fail("missing format_version header");
    if (v != kFormatVersion) throw fail("unsupported format version " + std::to_string(v));
  }
  TextDoc d;
  if (!next()) throw fail("missing doc line");
  if (line.rfind("doc ", 0) != 0) throw fail("expected 'doc <kind>'");
  d.kind = line.substr(4);
  bool ended = false;
  while (next()) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("attr ", 0) == 0) {
      const std::string rest = line.substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) throw fail("attribute without value");
      d.attrs.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
    } else if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ls(line.substr(7));
      std::string name;
      long rows = -1, cols = -1;
      if (!(ls >> name >> rows >> cols) || rows < 0 || cols < 0) throw fail("malformed tensor header");
      if (!next()) throw fail("tensor '" + name + "' has no value line");
      Matrix m(rows, cols);
      std::istringstream vs(line);
      std::string tok;
      for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) {
          if (!(vs >> tok)) throw fail("tensor '" + name + "' has too few values");
          m(i, j) = detail::parse_double(tok, "tensor " + name + " (line " + std::to_string(lineno) + ")");
        }
      if (vs >> tok) throw fail("tensor '" + name + "' has too many values");
      d.tensors.push_back({name, std::move(m)});
    } else if (!line.empty()) {
      throw fail("unrecognized line");
    }
  }
  if (!ended) throw fail("document is truncated (no 'end' line)");
  return d;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("read error on '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << content;
  f.flush();
  if (!f) throw IoError("write error on '" + path + "'");
}

inline TextDoc load_doc(const std::string& path) {
  try {
    return parse_text(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void save_doc(const std::string& path, const TextDoc& d) { write_file(path, to_text(d)); }

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace hmmlab::io
