#ifndef AREX_COMMON_HPP
#define AREX_COMMON_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

// Shared vocabulary types and the error taxonomy used across the library.
// All vectors are dense doubles; dimension mismatches and non-finite values
// are programming errors and throw rather than propagate NaNs.

namespace arex {

using Vec = std::vector<double>;

struct Error : std::runtime_error {
  explicit Error(const std::string& m) : std::runtime_error(m) {}
};

// Wrong dimensions somewhere in a numeric kernel.
struct ShapeError : Error { using Error::Error; };
// Numeric blow-up: NaN/inf reached a place that must stay finite.
struct NumericError : Error { using Error::Error; };
// A disclosed prediction does not match the model it claims to come from.
struct IntegrityError : Error { using Error::Error; };
// Bad run configuration (unknown keys, invalid combinations, missing files).
struct ConfigError : Error { using Error::Error; };
// Malformed input data while parsing.
struct ParseError : Error { using Error::Error; };
// Empty or unusable probe domain / search region.
struct DomainError : Error { using Error::Error; };
// A constructive procedure could not produce a certified witness.
struct ConstructionError : Error { using Error::Error; };
// Precondition on agent utility ordering violated.
struct PreconditionError : Error { using Error::Error; };
// Degenerate inputs: posterior with no mass, single-class labels, etc.
struct DegenerateError : Error { using Error::Error; };

inline bool is_finite(double v) { return std::isfinite(v); }

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(const Vec& v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string(what) + ": non-finite entry");
}

inline void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": dimension mismatch " +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

inline double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_sq(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "l2_sq");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double l2_norm(const Vec& a, const Vec& b) { return std::sqrt(l2_sq(a, b)); }

// Strict total order used for deterministic tie-breaking: first by distance
// to a reference point, then lexicographically.
inline bool closer_then_lex(const Vec& a, const Vec& b, const Vec& ref) {
  double da = l2_sq(a, ref), db = l2_sq(b, ref);
  if (da != db) return da < db;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  return false;
}

}  // namespace arex

#endif
