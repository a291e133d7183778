#pragma once

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gwps {

/// Default truncation order for float64 work. Consumers that need tighter
/// tail control pass their own order.
inline constexpr int kDefaultOrder = 256;

/// Truncated power series: coeffs()[n] is the coefficient of z^n and the
/// truncation order N equals coeffs().size() - 1.
///
/// The scalar S is double (float64 backend) or Rational (exact backend).
/// Arithmetic is schoolbook O(N^2) convolution truncated at the shorter
/// operand; orders here stay small enough that FFT would not pay off.
/// Values are immutable after construction and safe to share across threads.
template <class S>
class PowerSeries {
 public:
  PowerSeries() : coeffs_(1, S(0)) {}

  explicit PowerSeries(std::vector<S> coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw std::invalid_argument("PowerSeries: empty coefficient list");
  }

  static PowerSeries constant(const S& value, int order) {
    std::vector<S> c(static_cast<std::size_t>(order) + 1, S(0));
    c[0] = value;
    return PowerSeries(std::move(c));
  }

  static PowerSeries one(int order) { return constant(S(1), order); }

  int order() const { return static_cast<int>(coeffs_.size()) - 1; }

  const std::vector<S>& coeffs() const { return coeffs_; }

  /// Coefficient of z^n; zero beyond the truncation order.
  S at(int n) const {
    if (n < 0 || n > order()) return S(0);
    return coeffs_[static_cast<std::size_t>(n)];
  }

  bool nonnegative() const {
    for (const auto& c : coeffs_)
      if (c < S(0)) return false;
    return true;
  }

  /// Horner evaluation of the truncation at t. Radius/domain checks belong
  /// to the owner of the series (see OffspringSpec); this is raw arithmetic.
  S eval(const S& t) const {
    S acc(0);
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * t + *it;
    return acc;
  }

  /// Cauchy product truncated at min(order(), other.order()).
  PowerSeries mul(const PowerSeries& other) const {
    const int n = std::min(order(), other.order());
    std::vector<S> out(static_cast<std::size_t>(n) + 1, S(0));
    for (int i = 0; i <= n; ++i) {
      const S& a = coeffs_[static_cast<std::size_t>(i)];
      if (a == S(0)) continue;
      const int jmax = std::min(n - i, other.order());
      for (int j = 0; j <= jmax; ++j)
        out[static_cast<std::size_t>(i + j)] += a * other.coeffs_[static_cast<std::size_t>(j)];
    }
    return PowerSeries(std::move(out));
  }

  /// s^n by binary exponentiation; pow(s, 0) == 1 at the same order.
  PowerSeries pow(int n) const {
    if (n < 0) throw std::invalid_argument("PowerSeries::pow: negative exponent");
    PowerSeries result = one(order());
    PowerSeries base = *this;
    while (n > 0) {
      if (n & 1) result = result.mul(base);
      n >>= 1;
      if (n > 0) base = base.mul(base);
    }
    return result;
  }

  /// Formal derivative; truncation order drops by one.
  PowerSeries derivative() const {
    if (order() == 0) return PowerSeries(std::vector<S>{S(0)});
    std::vector<S> out(coeffs_.size() - 1);
    for (std::size_t n = 1; n < coeffs_.size(); ++n)
      out[n - 1] = S(static_cast<long long>(n)) * coeffs_[n];
    return PowerSeries(std::move(out));
  }

  /// Copy truncated (or zero-padded) to the given order.
  PowerSeries truncated(int order) const {
    std::vector<S> out(static_cast<std::size_t>(order) + 1, S(0));
    const std::size_t m = std::min(out.size(), coeffs_.size());
    std::copy(coeffs_.begin(), coeffs_.begin() + static_cast<std::ptrdiff_t>(m), out.begin());
    return PowerSeries(std::move(out));
  }

  friend PowerSeries operator*(const PowerSeries& a, const PowerSeries& b) { return a.mul(b); }

  friend PowerSeries operator+(const PowerSeries& a, const PowerSeries& b) {
    const int n = std::min(a.order(), b.order());
    std::vector<S> out(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) out[static_cast<std::size_t>(i)] = a.at(i) + b.at(i);
    return PowerSeries(std::move(out));
  }

  friend PowerSeries operator-(const PowerSeries& a, const PowerSeries& b) {
    const int n = std::min(a.order(), b.order());
    std::vector<S> out(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) out[static_cast<std::size_t>(i)] = a.at(i) - b.at(i);
    return PowerSeries(std::move(out));
  }

  bool operator==(const PowerSeries& other) const { return coeffs_ == other.coeffs_; }

 private:
  std::vector<S> coeffs_;
};

/// outer(inner) truncated at inner.order(). Requires inner constant term 0,
/// which is all the Lagrange solver needs (g and g_t both vanish at 0).
template <class S>
PowerSeries<S> compose(const PowerSeries<S>& outer, const PowerSeries<S>& inner) {
  if (!(inner.at(0) == S(0)))
    throw std::invalid_argument("compose: inner series must have zero constant term");
  const int n = inner.order();
  // Horner in the series ring over the coefficients of `outer` that can
  // still contribute below the truncation order.
  const int top = std::min(outer.order(), n);
  PowerSeries<S> acc = PowerSeries<S>::constant(outer.at(top), n);
  for (int j = top - 1; j >= 0; --j) {
    acc = acc.mul(inner);
    std::vector<S> c = acc.coeffs();
    c[0] += outer.at(j);
    acc = PowerSeries<S>(std::move(c));
  }
  return acc;
}

/// Multiplicative inverse of s modulo z^{order+1}; needs s(0) != 0.
template <class S>
PowerSeries<S> reciprocal(const PowerSeries<S>& s, int order) {
  if (s.at(0) == S(0)) throw std::invalid_argument("reciprocal: constant term is zero");
  std::vector<S> out(static_cast<std::size_t>(order) + 1, S(0));
  const S inv0 = S(1) / s.at(0);
  out[0] = inv0;
  for (int n = 1; n <= order; ++n) {
    S acc(0);
    for (int k = 1; k <= n; ++k) acc += s.at(k) * out[static_cast<std::size_t>(n - k)];
    out[static_cast<std::size_t>(n)] = -inv0 * acc;
  }
  return PowerSeries<S>(std::move(out));
}

/// Multiply by z: shifts coefficients up one slot, same truncation order.
template <class S>
PowerSeries<S> shift_up(const PowerSeries<S>& s) {
  std::vector<S> out(static_cast<std::size_t>(s.order()) + 1, S(0));
  for (int n = 1; n <= s.order(); ++n) out[static_cast<std::size_t>(n)] = s.at(n - 1);
  return PowerSeries<S>(std::move(out));
}

}  // namespace gwps
