#pragma once
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fp {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

// FNV-1a over raw bytes; used for content checksums of frozen parameters.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::vector<double>& v, uint64_t h = 0xcbf29ce484222325ull) {
  return v.empty() ? h : fnv1a(v.data(), v.size() * sizeof(double), h);
}

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Full-precision round-trip formatting for doubles (shortest exact form).
std::string fmt_double(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Eigenvalues of a dense symmetric n x n matrix (row major), ascending.
// Cyclic Jacobi; intended for small matrices (feature dims <= a few hundred).
std::vector<double> sym_eigenvalues(std::vector<double> a, int n);

}  // namespace fp
