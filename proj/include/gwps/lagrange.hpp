#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gwps/asym.hpp"
#include "gwps/family.hpp"
#include "gwps/rational.hpp"
#include "gwps/series.hpp"

namespace gwps {

/// Lattice period Q_psi = gcd{n >= 1 : b_n != 0}, computed from the
/// materialized truncation. A truncation can only overestimate Q, hence the
/// override hook in SolveOptions for specs whose support it hides.
template <class S>
int lattice_period(const OffspringSpec<S>& spec) {
  int q = 0;
  for (int n = 1; n <= spec.series.order(); ++n)
    if (!(spec.series.at(n) == S(0))) q = std::gcd(q, n);
  return q == 0 ? 1 : q;
}

namespace detail {

inline double log_rational(const Rational& r) {
  if (r == 0) return -std::numeric_limits<double>::infinity();
  auto log_big = [](const BigInt& x) {
    const unsigned b = boost::multiprecision::msb(x);
    if (b <= 900) return std::log(x.convert_to<double>());
    const BigInt shifted = x >> (b - 500);
    return std::log(shifted.convert_to<double>()) + static_cast<double>(b - 500) * M_LN2;
  };
  return log_big(boost::multiprecision::numerator(r)) -
         log_big(boost::multiprecision::denominator(r));
}

inline double log_scalar(double x) { return std::log(x); }
inline double log_scalar(const Rational& x) { return log_rational(x); }

}  // namespace detail

/// A_n = (1/n) coeff_{n-1}[psi^n] for 1 <= n <= N, by incremental powers
/// (psi^n = psi^{n-1} * psi). Raw arithmetic in the given backend: exact for
/// Rational, plain double otherwise (no overflow guard; the production float
/// path lives in lagrange_solve).
template <class S>
std::vector<S> lagrange_coeffs_direct(const OffspringSpec<S>& spec, int N) {
  if (N < 1) throw std::invalid_argument("lagrange_coeffs_direct: N must be >= 1");
  const PowerSeries<S> psi = spec.series.truncated(N - 1);
  std::vector<S> A(static_cast<std::size_t>(N) + 1, S(0));
  PowerSeries<S> pw = psi;  // psi^1
  A[1] = pw.at(0);
  for (int n = 2; n <= N; ++n) {
    pw = pw.mul(psi);
    A[static_cast<std::size_t>(n)] = pw.at(n - 1) / S(n);
  }
  return A;
}

/// Newton iteration on F(g) = g - z psi(g), the redundant cross-check path:
/// correct order doubles per step since F'(g) = 1 - z psi'(g) is a unit.
template <class S>
std::vector<S> lagrange_coeffs_newton(const OffspringSpec<S>& spec, int N) {
  if (N < 1) throw std::invalid_argument("lagrange_coeffs_newton: N must be >= 1");
  const PowerSeries<S> psi = spec.series.truncated(N);
  const PowerSeries<S> dpsi = spec.series.derivative().truncated(N);
  std::vector<S> g0(static_cast<std::size_t>(N) + 1, S(0));
  g0[1] = psi.at(0);  // g = b_0 z, correct through order 1
  PowerSeries<S> g(std::move(g0));
  int steps = 1;
  for (int correct = 1; correct < N; correct *= 2) ++steps;
  for (int it = 0; it < steps; ++it) {
    const PowerSeries<S> f = g - shift_up(compose(psi, g));
    const PowerSeries<S> denom =
        PowerSeries<S>::one(N) - shift_up(compose(dpsi, g));
    g = g - f.mul(reciprocal(denom, N));
  }
  return g.coeffs();
}

struct RadiusProbe {
  double rho = 0;
  bool converged = false;
};

/// R_g = sup_{t in (0,R)} t/psi(t). With an apex this is tau/psi(tau);
/// otherwise t/psi(t) increases all the way to R and the sup is probed as a
/// monotone limit.
inline RadiusProbe g_radius_probe(const OffspringSpec<double>& spec,
                                  const Classification& cls) {
  RadiusProbe out;
  if (cls.is_star) {
    const double tau = *cls.tau;
    out.rho = tau / spec.series.eval(tau);
    out.converged = true;
    return out;
  }
  const bool entire = std::isinf(spec.radius);
  double prev = 0;
  for (int k = 1; k <= 48; ++k) {
    const double t = entire ? std::ldexp(1.0, k) : spec.radius * (1.0 - std::ldexp(1.0, -k));
    const double s = t / spec.series.eval(t);
    out.converged = std::abs(s - prev) <= 1e-12 * std::max(1.0, std::abs(s));
    prev = s;
  }
  out.rho = prev;
  return out;
}

inline double g_radius(const OffspringSpec<double>& spec) {
  return g_radius_probe(spec, classify(spec)).rho;
}

struct SolveOptions {
  bool self_check = true;
  std::optional<int> lattice_override;
};

/// The solved Lagrange equation g(z) = z psi(g(z)) for one offspring spec:
/// coefficients A_n, radius rho = R_g, apex tau (K* only), lattice period Q,
/// and the OMM constants when they exist. Immutable once built.
///
/// Float backend: `coeffs` holds raw A_n and overflows to +inf once A_n
/// leaves double range (rho < 1 makes A_n grow geometrically), so
/// `log_coeffs` (ln A_n) and `scaled` (A_n rho^n, bounded) carry the usable
/// magnitudes; every downstream evaluation works off `scaled`.
template <class S>
struct LagrangeSolution {
  OffspringSpec<S> spec;
  std::vector<S> coeffs;            // A_0..A_N
  std::vector<double> log_coeffs;   // ln A_n (-inf where A_n = 0)
  std::vector<double> scaled;       // A_n rho^n
  double rho = 0;
  std::optional<double> tau;
  int lattice = 1;  // Q_psi
  std::optional<AsymptoticProfile> profile;

  int order() const { return static_cast<int>(coeffs.size()) - 1; }
};

namespace detail {

/// Recomposition self-check on the t0-normalized form: with s = t0/psi(t0)
/// and ghat(w) = g(s w)/t0, the equation reads ghat = w * psi_t0(ghat).
inline void self_check_float(const OffspringSpec<double>& spec, double t0,
                             const std::vector<double>& log_A, int N) {
  const double s = t0 / spec.series.eval(t0);
  const double log_s = std::log(s);
  const double log_t0 = std::log(t0);
  std::vector<double> gh(static_cast<std::size_t>(N) + 1, 0.0);
  double gmax = 0;
  for (int n = 1; n <= N; ++n) {
    const double l = log_A[static_cast<std::size_t>(n)];
    if (std::isfinite(l)) gh[static_cast<std::size_t>(n)] = std::exp(l + n * log_s - log_t0);
    gmax = std::max(gmax, gh[static_cast<std::size_t>(n)]);
  }
  const PowerSeries<double> ghat(gh);
  const PowerSeries<double> psi_t0(
      khinchin_mass_table(spec, t0, std::min(spec.series.order(), N)));
  const PowerSeries<double> recomposed = shift_up(compose(psi_t0.truncated(N), ghat));
  double worst = 0;
  for (int n = 0; n <= N; ++n) worst = std::max(worst, std::abs(recomposed.at(n) - ghat.at(n)));
  if (worst > 1e-8 * std::max(gmax, 1e-300))
    throw std::runtime_error("lagrange_solve: recomposition self-check failed (residual " +
                             std::to_string(worst) + ")");
}

}  // namespace detail

/// Float-backend solve. Powers of psi are tracked with a power-of-two
/// exponent offset: whenever a coefficient of the running power leaves
/// [2^-512, 2^512] the whole vector is rescaled and the exponent folded into
/// the log-space magnitudes, so A_n and A_n rho^n come out right even when
/// the raw values overflow double range.
inline LagrangeSolution<double> lagrange_solve(const OffspringSpec<double>& spec, int N,
                                               const SolveOptions& opts = {}) {
  if (N < 1) throw std::invalid_argument("lagrange_solve: N must be >= 1");
  const Classification cls = classify(spec);
  const RadiusProbe rad = g_radius_probe(spec, cls);
  if (!rad.converged)
    throw std::runtime_error("lagrange_solve: radius supremum probe did not converge for '" +
                             spec.name + "'");

  LagrangeSolution<double> sol{spec,
                               std::vector<double>(static_cast<std::size_t>(N) + 1, 0.0),
                               std::vector<double>(static_cast<std::size_t>(N) + 1,
                                                   -std::numeric_limits<double>::infinity()),
                               std::vector<double>(static_cast<std::size_t>(N) + 1, 0.0),
                               rad.rho,
                               cls.tau,
                               1,
                               std::nullopt};
  sol.lattice = opts.lattice_override.value_or(lattice_period(spec));
  if (cls.is_star) {
    const double sigma = std::sqrt(khinchin_variance(spec, *cls.tau));
    sol.profile = make_profile(*cls.tau, sigma, sol.lattice);
  }

  const PowerSeries<double> psi = spec.series.truncated(N - 1);
  PowerSeries<double> pw = psi;
  long exponent = 0;  // running power holds psi^n / 2^exponent
  const double kHigh = std::ldexp(1.0, 512), kLow = std::ldexp(1.0, -512);
  for (int n = 1; n <= N; ++n) {
    if (n > 1) {
      pw = pw.mul(psi);
      double mx = 0;
      for (double c : pw.coeffs()) mx = std::max(mx, c);
      if (mx > kHigh || (mx > 0 && mx < kLow)) {
        const int shift = (mx > kHigh) ? -512 : 512;
        std::vector<double> rescaled = pw.coeffs();
        for (double& c : rescaled) c = std::ldexp(c, shift);
        pw = PowerSeries<double>(std::move(rescaled));
        exponent -= shift;
      }
    }
    const double c = pw.at(n - 1);
    if (c > 0) {
      const double log_a =
          std::log(c) + static_cast<double>(exponent) * M_LN2 - std::log(static_cast<double>(n));
      sol.log_coeffs[static_cast<std::size_t>(n)] = log_a;
      sol.coeffs[static_cast<std::size_t>(n)] =
          (exponent == 0) ? c / static_cast<double>(n) : std::exp(log_a);
      sol.scaled[static_cast<std::size_t>(n)] = std::exp(log_a + n * std::log(sol.rho));
    }
  }

  if (opts.self_check) {
    const bool entire = std::isinf(spec.radius);
    const double t0 = cls.is_star ? *cls.tau
                                  : (entire ? std::ldexp(1.0, 20)
                                            : spec.radius * (1.0 - std::ldexp(1.0, -20)));
    detail::self_check_float(spec, t0, sol.log_coeffs, N);
  }
  return sol;
}

/// Exact-backend solve; coefficient identities downstream compare with
/// equality, not tolerance. Metadata (rho, tau, profile) comes from the
/// float view of the same spec.
inline LagrangeSolution<Rational> lagrange_solve(const OffspringSpec<Rational>& spec, int N,
                                                 const SolveOptions& opts = {}) {
  if (N < 1) throw std::invalid_argument("lagrange_solve: N must be >= 1");
  const OffspringSpec<double> dspec = spec_to_double(spec);
  const Classification cls = classify(dspec);
  const RadiusProbe rad = g_radius_probe(dspec, cls);

  LagrangeSolution<Rational> sol{spec,
                                 lagrange_coeffs_direct(spec, N),
                                 std::vector<double>(static_cast<std::size_t>(N) + 1,
                                                     -std::numeric_limits<double>::infinity()),
                                 std::vector<double>(static_cast<std::size_t>(N) + 1, 0.0),
                                 rad.rho,
                                 cls.tau,
                                 1,
                                 std::nullopt};
  sol.lattice = opts.lattice_override.value_or(lattice_period(spec));
  if (cls.is_star) {
    const double sigma = std::sqrt(khinchin_variance(dspec, *cls.tau));
    sol.profile = make_profile(*cls.tau, sigma, sol.lattice);
  }
  for (int n = 1; n <= N; ++n) {
    const Rational& a = sol.coeffs[static_cast<std::size_t>(n)];
    if (a == 0) continue;
    sol.log_coeffs[static_cast<std::size_t>(n)] = detail::log_rational(a);
    sol.scaled[static_cast<std::size_t>(n)] =
        std::exp(sol.log_coeffs[static_cast<std::size_t>(n)] + n * std::log(sol.rho));
  }

  if (opts.self_check) {
    // Exact recomposition: coefficients of z psi(g) must equal A through N.
    const PowerSeries<Rational> g(sol.coeffs);
    const PowerSeries<Rational> recomposed =
        shift_up(compose(spec.series.truncated(N), g));
    for (int n = 0; n <= N; ++n)
      if (!(recomposed.at(n) == g.at(n)))
        throw std::runtime_error("lagrange_solve: exact recomposition self-check failed at n=" +
                                 std::to_string(n));
  }
  return sol;
}

/// H-form of the inversion formula:
///   coeff_n[H(g(z))] = (1/n) coeff_{n-1}[H'(z) psi(z)^n].
template <class S>
S h_form_coeff(const OffspringSpec<S>& spec, const PowerSeries<S>& H, int n) {
  if (n < 1) throw std::invalid_argument("h_form_coeff: n must be >= 1");
  const PowerSeries<S> psi_n = spec.series.truncated(n - 1).pow(n);
  return H.derivative().truncated(n - 1).mul(psi_n).at(n - 1) / S(n);
}

struct GEval {
  double value = 0;
  std::optional<double> tail_bound;  // sum beyond the truncation; K* specs only
};

/// g(x) = sum A_n x^n for 0 <= x <= rho, evaluated through the scaled
/// coefficients as sum (A_n rho^n) (x/rho)^n, which stays bounded all the
/// way to the boundary point g(rho) = tau.
inline GEval g_eval(const LagrangeSolution<double>& sol, double x) {
  if (!(x >= 0) || x > sol.rho * (1 + 1e-12))
    throw std::domain_error("g_eval: x outside [0, rho]");
  const double u = std::min(x / sol.rho, 1.0);
  double acc = 0, un = 1;
  for (int n = 1; n <= sol.order(); ++n) {
    un *= u;
    acc += sol.scaled[static_cast<std::size_t>(n)] * un;
  }
  GEval out;
  out.value = acc;
  if (sol.profile) out.tail_bound = sol.profile->series_tail_bound(x, sol.rho, sol.order());
  return out;
}

}  // namespace gwps
