#pragma once

#include <boost/multiprecision/cpp_int.hpp>

namespace gwps {

/// Exact-rational scalar backend. Arbitrary precision, always canonical.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double x) { return x; }

/// S from an integer fraction, for either backend.
template <class S>
S fraction(long long num, long long den) {
  return S(num) / S(den);
}

inline BigInt factorial(int n) {
  BigInt f = 1;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace gwps
