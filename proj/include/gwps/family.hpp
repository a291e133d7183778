#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwps/rational.hpp"
#include "gwps/series.hpp"

namespace gwps {

enum class SpecKind { PresetExp, PresetGeometric, Polynomial, ExplicitCoeffs };

inline const char* to_string(SpecKind k) {
  switch (k) {
    case SpecKind::PresetExp: return "preset-exp";
    case SpecKind::PresetGeometric: return "preset-geometric";
    case SpecKind::Polynomial: return "polynomial";
    case SpecKind::ExplicitCoeffs: return "explicit-coeffs";
  }
  return "?";
}

/// An offspring law psi given as a truncated power series with nonnegative
/// coefficients, b_0 > 0 and at least one positive higher coefficient, plus
/// its declared radius of convergence R_psi (+inf allowed).
///
/// The radius is part of the input: it is exact for presets and polynomials
/// and user-declared for explicit coefficient lists, never inferred from a
/// truncation.
template <class S>
struct OffspringSpec {
  SpecKind kind;
  PowerSeries<S> series;
  double radius;  // R_psi
  std::string name;

  OffspringSpec(SpecKind k, PowerSeries<S> s, double r, std::string n)
      : kind(k), series(std::move(s)), radius(r), name(std::move(n)) {
    if (!(radius > 0)) throw std::invalid_argument("OffspringSpec: radius must be positive");
    if (!series.nonnegative())
      throw std::invalid_argument("OffspringSpec: negative coefficient in offspring series");
    if (!(series.at(0) > S(0)))
      throw std::invalid_argument("OffspringSpec: constant term b_0 must be positive");
    bool nonconstant = false;
    for (int n_ = 1; n_ <= series.order(); ++n_)
      if (series.at(n_) > S(0)) nonconstant = true;
    if (!nonconstant)
      throw std::invalid_argument("OffspringSpec: series must be non-constant");
  }
};

/// psi(z) = e^z, coefficients 1/n! (exact in the rational backend), R = inf.
template <class S>
OffspringSpec<S> make_exp_spec(int order = kDefaultOrder) {
  std::vector<S> c(static_cast<std::size_t>(order) + 1);
  c[0] = S(1);
  for (int n = 1; n <= order; ++n) c[static_cast<std::size_t>(n)] = c[n - 1] / S(n);
  return OffspringSpec<S>(SpecKind::PresetExp, PowerSeries<S>(std::move(c)),
                          std::numeric_limits<double>::infinity(), "exp");
}

/// psi(z) = 1/(1-z), all coefficients 1, R = 1. Weighted tree view: every
/// rooted plane tree has weight 1.
template <class S>
OffspringSpec<S> make_geometric_spec(int order = kDefaultOrder) {
  std::vector<S> c(static_cast<std::size_t>(order) + 1, S(1));
  return OffspringSpec<S>(SpecKind::PresetGeometric, PowerSeries<S>(std::move(c)), 1.0,
                          "planetree");
}

template <class S>
OffspringSpec<S> make_polynomial_spec(std::vector<S> coeffs, std::string name = "polynomial") {
  return OffspringSpec<S>(SpecKind::Polynomial, PowerSeries<S>(std::move(coeffs)),
                          std::numeric_limits<double>::infinity(), std::move(name));
}

template <class S>
OffspringSpec<S> make_explicit_spec(std::vector<S> coeffs, double radius,
                                    std::string name = "explicit") {
  return OffspringSpec<S>(SpecKind::ExplicitCoeffs, PowerSeries<S>(std::move(coeffs)), radius,
                          std::move(name));
}

inline OffspringSpec<double> spec_to_double(const OffspringSpec<Rational>& spec) {
  std::vector<double> c;
  c.reserve(spec.series.coeffs().size());
  for (const auto& x : spec.series.coeffs()) c.push_back(to_double(x));
  return OffspringSpec<double>(spec.kind, PowerSeries<double>(std::move(c)), spec.radius,
                               spec.name);
}

namespace detail {
template <class S>
void check_domain(const OffspringSpec<S>& spec, double t) {
  if (!(t >= 0) || !(t < spec.radius))
    throw std::domain_error("parameter t outside [0, R_psi) for offspring series '" + spec.name +
                            "'");
}
}  // namespace detail

/// psi(t), checked against the declared radius.
template <class S>
S psi_eval(const OffspringSpec<S>& spec, const S& t) {
  detail::check_domain(spec, to_double(t));
  return spec.series.eval(t);
}

/// Khinchin mass P(Y_t = n) = b_n t^n / psi(t); at t = 0 the law is the
/// point mass at 0.
template <class S>
S khinchin_mass(const OffspringSpec<S>& spec, const S& t, int n) {
  detail::check_domain(spec, to_double(t));
  if (t == S(0)) return n == 0 ? S(1) : S(0);
  S tn(1);
  for (int k = 0; k < n; ++k) tn *= t;
  return spec.series.at(n) * tn / spec.series.eval(t);
}

/// Mean m_psi(t) = t psi'(t) / psi(t); strictly increasing, m(0) = 0.
template <class S>
S khinchin_mean(const OffspringSpec<S>& spec, const S& t) {
  detail::check_domain(spec, to_double(t));
  if (t == S(0)) return S(0);
  return t * spec.series.derivative().eval(t) / spec.series.eval(t);
}

/// Variance sigma^2(t) = t m'(t) = [t psi' + t^2 psi'']/psi - m^2;
/// strictly positive for t > 0.
template <class S>
S khinchin_variance(const OffspringSpec<S>& spec, const S& t) {
  detail::check_domain(spec, to_double(t));
  if (t == S(0)) return S(0);
  const PowerSeries<S> d1 = spec.series.derivative();
  const PowerSeries<S> d2 = d1.derivative();
  const S p = spec.series.eval(t);
  const S m = t * d1.eval(t) / p;
  return (t * d1.eval(t) + t * t * d2.eval(t)) / p - m * m;
}

/// One slice of the Khinchin family at parameter t.
template <class S>
struct FamilyPoint {
  S t;
  std::vector<S> mass;  // mass[n] = P(Y_t = n), n <= n_max
  S mean;
  S variance;
  S tail_mass;  // 1 - sum(mass); mass beyond n_max
};

template <class S>
FamilyPoint<S> mass_function(const OffspringSpec<S>& spec, const S& t, int n_max) {
  detail::check_domain(spec, to_double(t));
  FamilyPoint<S> out;
  out.t = t;
  out.mass.resize(static_cast<std::size_t>(n_max) + 1, S(0));
  if (t == S(0)) {
    out.mass[0] = S(1);
    out.mean = S(0);
    out.variance = S(0);
    out.tail_mass = S(0);
    return out;
  }
  const S p = spec.series.eval(t);
  S tn(1);
  S total(0);
  for (int n = 0; n <= n_max; ++n) {
    out.mass[static_cast<std::size_t>(n)] = spec.series.at(n) * tn / p;
    total += out.mass[static_cast<std::size_t>(n)];
    tn *= t;
  }
  out.mean = khinchin_mean(spec, t);
  out.variance = khinchin_variance(spec, t);
  out.tail_mass = S(1) - total;
  if (out.tail_mass < S(0)) out.tail_mass = S(0);  // float rounding below 1
  return out;
}

/// Mass table P(Y_t = j), j = 0..order: the probability-normalized
/// coefficients b_j t^j / psi(t). Computed in log space so that large t
/// against high-degree truncations stays finite. These are also the
/// coefficients of the offspring pgf psi_t(z) = psi(t z)/psi(t).
inline std::vector<double> khinchin_mass_table(const OffspringSpec<double>& spec, double t,
                                               int order) {
  detail::check_domain(spec, t);
  std::vector<double> w(static_cast<std::size_t>(order) + 1, 0.0);
  if (t == 0) {
    w[0] = 1.0;
    return w;
  }
  const auto& b = spec.series.coeffs();
  const double logt = std::log(t);
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> lw(b.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b[j] > 0) {
      lw[j] = std::log(b[j]) + static_cast<double>(j) * logt;
      max_log = std::max(max_log, lw[j]);
    }
  double sum = 0;
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b[j] > 0) sum += std::exp(lw[j] - max_log);
  const double log_psi = max_log + std::log(sum);
  for (std::size_t j = 0; j < w.size() && j < b.size(); ++j)
    if (b[j] > 0) w[j] = std::exp(lw[j] - log_psi);
  return w;
}

namespace detail {

/// m_psi(t) for probe loops: falls back to a log-scaled evaluation when the
/// plain Horner quotient overflows (large t against high-degree truncations).
inline double stable_mean(const OffspringSpec<double>& spec, double t) {
  const double p = spec.series.eval(t);
  const double dp = spec.series.derivative().eval(t);
  const double m = t * dp / p;
  if (std::isfinite(m) && std::isfinite(p)) return m;
  const auto& b = spec.series.coeffs();
  const double logt = std::log(t);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < b.size(); ++n)
    if (b[n] > 0) max_log = std::max(max_log, std::log(b[n]) + static_cast<double>(n) * logt);
  double num = 0, den = 0;
  for (std::size_t n = 0; n < b.size(); ++n) {
    if (b[n] <= 0) continue;
    const double w = std::exp(std::log(b[n]) + static_cast<double>(n) * logt - max_log);
    num += static_cast<double>(n) * w;
    den += w;
  }
  return num / den;
}

}  // namespace detail

/// Result of class detection. For psi in K* the apex tau solves
/// m_psi(tau) = 1; mean_limit is M_psi = lim_{t -> R} m_psi(t)
/// (exact for presets and polynomials, a probe estimate otherwise).
struct Classification {
  bool is_star = false;
  std::optional<double> tau;
  double mean_limit = 0.0;
  bool limit_exact = false;
  bool probe_converged = true;
};

inline int poly_degree(const PowerSeries<double>& s) {
  for (int n = s.order(); n >= 0; --n)
    if (s.at(n) != 0.0) return n;
  return 0;
}

namespace detail {

/// Probe parameters toward R per the monotone-mean argument: the mean is
/// increasing, so the first probe with m > 1 brackets the apex.
struct ApexBracket {
  double lo, hi;  // m(lo) <= 1 < m(hi)
};

inline std::optional<ApexBracket> probe_for_apex(const OffspringSpec<double>& spec,
                                                 double* last_mean) {
  double lo = 0.0;
  const bool entire = std::isinf(spec.radius);
  double m = 0;
  for (int k = 0; k <= 48; ++k) {
    const double t = entire ? std::ldexp(1.0, k)  // 2^k
                            : spec.radius * (1.0 - std::ldexp(1.0, -(k + 1)));
    m = stable_mean(spec, t);
    if (m > 1.0) {
      if (last_mean) *last_mean = m;
      return ApexBracket{lo, t};
    }
    lo = t;
  }
  if (last_mean) *last_mean = m;
  return std::nullopt;
}

}  // namespace detail

/// Solve m_psi(tau) = 1 to |m(tau) - 1| <= 1e-12. Bisection on the probe
/// bracket, polished by Newton (m' = sigma^2 / t > 0, so the root is unique
/// and Newton is safe once close).
inline double solve_apex(const OffspringSpec<double>& spec) {
  const auto bracket = detail::probe_for_apex(spec, nullptr);
  if (!bracket)
    throw std::runtime_error("solve_apex: mean never exceeds 1 within probe budget (psi not in "
                             "K*?) for '" + spec.name + "'");
  double lo = bracket->lo, hi = bracket->hi;
  auto f = [&](double t) { return detail::stable_mean(spec, t) - 1.0; };
  for (int it = 0; it < 200 && (hi - lo) > 1e-9 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) <= 0 ? lo : hi) = mid;
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double r = f(t);
    if (std::abs(r) <= 1e-12) return t;
    const double slope = khinchin_variance(spec, t) / t;
    double next = t - r / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    (f(next) <= 0 ? lo : hi) = next;
    t = next;
  }
  if (std::abs(f(t)) <= 1e-10) return t;  // pathological flat mean; still tight
  throw std::runtime_error("solve_apex: did not reach tolerance for '" + spec.name + "'");
}

/// Detect K* membership (mean limit M > 1) and locate the apex when present.
inline Classification classify(const OffspringSpec<double>& spec) {
  Classification out;
  // Exact limits where the structure gives them: presets are entire/geometric
  // with unbounded mean; a polynomial's mean tends to its degree.
  if (spec.kind == SpecKind::PresetExp || spec.kind == SpecKind::PresetGeometric) {
    out.mean_limit = std::numeric_limits<double>::infinity();
    out.limit_exact = true;
  } else if (spec.kind == SpecKind::Polynomial) {
    out.mean_limit = static_cast<double>(poly_degree(spec.series));
    out.limit_exact = true;
  }
  double last_mean = 0;
  const auto bracket = detail::probe_for_apex(spec, &last_mean);
  if (bracket) {
    out.is_star = true;
    out.tau = solve_apex(spec);
    if (!out.limit_exact) out.mean_limit = last_mean;  // lower bound; M > 1 is what matters
  } else {
    out.is_star = false;
    if (!out.limit_exact) {
      out.mean_limit = last_mean;
      // Degree-1 polynomials (m -> 1) and similar saturating means converge;
      // report a non-converged probe when the mean is still moving.
      const bool entire = std::isinf(spec.radius);
      const double t_prev = entire ? std::ldexp(1.0, 47)
                                   : spec.radius * (1.0 - std::ldexp(1.0, -48));
      out.probe_converged = std::abs(last_mean - detail::stable_mean(spec, t_prev)) <= 1e-9;
    }
  }
  return out;
}

}  // namespace gwps
