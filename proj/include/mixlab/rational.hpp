#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <vector>

#include "mixlab/errors.hpp"

namespace mixlab {

// Exact rational scalar. All structural chain data (kernels, stationary
// distributions, edge weights, couplings) lives in this type; floating
// point is reserved for spectra and distances.
using Rat = mpq_class;

using RatVec = std::vector<Rat>;

// mpq_class(num, den) keeps the fraction as written; arithmetic and
// comparisons assume canonical form, so construction must reduce.
inline Rat rat(long num, long den = 1) {
  Rat q(num, den);
  q.canonicalize();
  return q;
}

inline double to_double(const Rat& q) { return q.get_d(); }

inline std::string rat_str(const Rat& q) { return q.get_str(); }

// Parses "p/q" or "p" with optional sign. Rejects anything else, in
// particular decimal notation.
inline Rat parse_rat(const std::string& s) {
  if (s.empty()) fail(ErrorKind::Parse, "empty rational literal");
  for (char c : s) {
    bool ok = (c >= '0' && c <= '9') || c == '/' || c == '-' || c == '+';
    if (!ok)
      fail(ErrorKind::Parse,
           "bad rational literal '" + s + "' (exact p/q form required)");
  }
  try {
    Rat q(s);
    q.canonicalize();
    return q;
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::Parse, "bad rational literal '" + s + "'");
  }
}

// Exact conversion: every finite double is a dyadic rational.
inline Rat rat_from_double(double d) { return Rat(d); }

}  // namespace mixlab
