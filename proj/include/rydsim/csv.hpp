#pragma once

// Minimal CSV emission with a fixed number format so that outputs are
// byte-identical across runs.

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

namespace rydsim::csv {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Quotes a field when it contains a separator, quote or newline.
inline std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class Writer {
 public:
  Writer(std::ostream& os, std::initializer_list<const char*> header) : os_(os) {
    bool first = true;
    for (const char* h : header) {
      os_ << (first ? "" : ",") << h;
      first = false;
    }
    os_ << '\n';
  }

  Writer& operator<<(double v) { return put(num(v)); }
  Writer& operator<<(int v) { return put(std::to_string(v)); }
  Writer& operator<<(long v) { return put(std::to_string(v)); }
  Writer& operator<<(std::size_t v) { return put(std::to_string(v)); }
  Writer& operator<<(const std::string& s) { return put(field(s)); }
  Writer& operator<<(const char* s) { return put(field(s)); }

  void end_row() {
    os_ << '\n';
    fresh_ = true;
  }

 private:
  Writer& put(const std::string& s) {
    if (!fresh_) os_ << ',';
    os_ << s;
    fresh_ = false;
    return *this;
  }

  std::ostream& os_;
  bool fresh_ = true;
};

}  // namespace rydsim::csv
