#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gwps {

/// Constants of the Otter-Meir-Moon estimate for psi in K*:
///   A_n rho^n ~ C / n^{3/2} on lattice indices n = 1 mod Q,
/// with C = Q tau / (sqrt(2 pi) sigma_psi(tau)).
struct AsymptoticProfile {
  double C = 0;
  double tau = 0;
  double sigma_tau = 0;  // sigma_psi(tau) > 0
  int Q = 1;

  /// Upper bound on sum_{n > N} A_n x^n for 0 <= x <= rho.
  ///
  /// Empirical majorant, not a theorem: assumes A_n rho^n <= K n^{-3/2} with
  /// K = 2C (calibration factor 2, validated against exact partial sums at
  /// desk scale in the test suite). The asymptotic estimate itself is only
  /// an equivalence, hence the label.
  double series_tail_bound(double x, double rho, int N) const {
    if (x < 0 || !(x <= rho * (1 + 1e-12)))
      throw std::domain_error("series_tail_bound: x outside [0, rho]");
    if (x == 0) return 0.0;
    const double K = 2.0 * C;
    const double at_rho = 2.0 * K / std::sqrt(static_cast<double>(N));
    const double u = x / rho;
    if (u >= 1.0) return at_rho;
    const double geom =
        K * std::pow(u, N + 1) / (1.0 - u) * std::pow(static_cast<double>(N), -1.5);
    return std::min(geom, at_rho);
  }
};

inline AsymptoticProfile make_profile(double tau, double sigma_tau, int Q) {
  if (!(sigma_tau > 0)) throw std::invalid_argument("make_profile: sigma(tau) must be positive");
  AsymptoticProfile p;
  p.tau = tau;
  p.sigma_tau = sigma_tau;
  p.Q = Q;
  p.C = static_cast<double>(Q) * tau / (std::sqrt(2.0 * M_PI) * sigma_tau);
  return p;
}

struct RatioRow {
  int n;
  double scaled_n32;  // A_n rho^n n^{3/2}
  double ratio;       // -> 1 on lattice indices
};

/// Convergence table r_n = A_n rho^n n^{3/2} / C for lattice indices
/// n = 1 mod Q. `scaled` holds A_n rho^n by index.
inline std::vector<RatioRow> an_ratios(const std::vector<double>& scaled,
                                       const AsymptoticProfile& prof, int n_max) {
  std::vector<RatioRow> rows;
  for (int n = 1; n < static_cast<int>(scaled.size()) && n <= n_max; ++n) {
    if (prof.Q > 1 && (n - 1) % prof.Q != 0) continue;  // off lattice: A_n = 0
    const double s32 = scaled[static_cast<std::size_t>(n)] * std::pow(n, 1.5);
    rows.push_back({n, s32, s32 / prof.C});
  }
  return rows;
}

}  // namespace gwps
