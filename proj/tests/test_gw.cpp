#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gwps/gw.hpp"
#include "gwps/rational.hpp"

using gwps::extinction;
using gwps::extinction_fixed_point;
using gwps::extinction_series;
using gwps::lagrange_solve;
using gwps::make_exp_spec;
using gwps::make_geometric_spec;
using gwps::make_polynomial_spec;
using gwps::OffspringSampler;
using gwps::Rational;
using gwps::Rng;

namespace {

// Independent oracle for the Poisson family: Newton on q = e^{t(q-1)}.
double poisson_extinction_oracle(double t) {
  double q = 0.1;
  for (int it = 0; it < 200; ++it) {
    const double f = q - std::exp(t * (q - 1.0));
    const double df = 1.0 - t * std::exp(t * (q - 1.0));
    const double next = q - f / df;
    if (std::abs(next - q) < 1e-15) return next;
    q = next;
  }
  return q;
}

}  // namespace

TEST_CASE("extinction: subcritical plateau and supercritical values (exp)") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 400);

  // t = 0.5 < tau: q = 1. The series argument sits strictly inside the disk,
  // so the coefficient formula is sharp.
  const auto sv = extinction_series(sol, 0.5);
  CHECK(sv.q == Catch::Approx(1.0).margin(1e-12));
  CHECK_FALSE(sv.slow_convergence);
  CHECK(extinction_fixed_point(spec, 0.5).q == Catch::Approx(1.0).margin(1e-10));
  CHECK(extinction(sol, 0.5).q == 1.0);

  // t = 2: q solves q = e^{2(q-1)} (~0.203188).
  const double oracle = poisson_extinction_oracle(2.0);
  CHECK(oracle == Catch::Approx(0.203188).margin(5e-7));
  CHECK(extinction_series(sol, 2.0).q == Catch::Approx(oracle).margin(1e-10));
  const auto fp = extinction_fixed_point(spec, 2.0);
  CHECK(fp.converged);
  CHECK(fp.q == Catch::Approx(oracle).margin(1e-10));
  CHECK(extinction(sol, 2.0).method == gwps::ExtinctionMethod::Series);
  CHECK(extinction(sol, 1.01).method == gwps::ExtinctionMethod::FixedPoint);
  CHECK(extinction(sol, 0.0).q == 1.0);
  CHECK(extinction(sol, 0.0).method == gwps::ExtinctionMethod::Degenerate);
  CHECK_THROWS_AS(extinction_series(sol, 0.0), std::domain_error);
  CHECK_THROWS_AS(extinction_fixed_point(spec, -1.0), std::domain_error);
}

TEST_CASE("extinction: geometric closed form q = (1-t)/t past the apex") {
  const auto spec = make_geometric_spec<double>();
  const auto sol = lagrange_solve(spec, 400);
  CHECK(extinction_fixed_point(spec, 0.75).q == Catch::Approx(1.0 / 3.0).margin(1e-10));
  CHECK(extinction_series(sol, 0.75).q == Catch::Approx(1.0 / 3.0).margin(1e-9));
  for (double t : {0.6, 0.8, 0.9})
    CHECK(extinction(sol, t).q == Catch::Approx((1.0 - t) / t).margin(1e-9));
}

TEST_CASE("extinction: binary offspring law 1 + 3z^2 has q = p0/p2") {
  const auto spec = make_polynomial_spec<double>({1, 0, 3}, "1+3z^2");
  // Supercritical at t = 1 (m = 6/4 > 1): q = 1/(3 t^2).
  const auto fp = extinction_fixed_point(spec, 1.0);
  CHECK(fp.q == Catch::Approx(1.0 / 3.0).margin(1e-10));
  // Quadratic-formula oracle: smallest root of 3t^2 q^2 - (1+3t^2) q + 1.
  const double t = 1.2, a = 3 * t * t, b = -(1 + 3 * t * t), c = 1;
  const double root = (-b - std::sqrt(b * b - 4 * a * c)) / (2 * a);
  CHECK(extinction_fixed_point(spec, t).q == Catch::Approx(root).margin(1e-10));
}

TEST_CASE("threshold law: q = 1 iff m <= 1, both directions on grids") {
  const auto espec = make_exp_spec<double>();
  const auto esol = lagrange_solve(espec, 400);
  const auto gspec = make_geometric_spec<double>();
  const auto gsol = lagrange_solve(gspec, 400);
  for (int k = 1; k <= 30; ++k) {
    const double te = 2.0 * k / 30.0;  // spans both phases of exp (tau = 1)
    const bool sub_e = gwps::khinchin_mean(espec, te) <= 1.0;
    CHECK((extinction(esol, te).q == 1.0) == sub_e);
    const double tg = 0.98 * k / 30.0;  // spans both phases of geometric
    const bool sub_g = gwps::khinchin_mean(gspec, tg) <= 1.0;
    CHECK((extinction(gsol, tg).q == 1.0) == sub_g);
  }
}

TEST_CASE("q(t) <= tau/t and q decreases strictly past the apex") {
  const auto especs = make_exp_spec<double>();
  const auto esol = lagrange_solve(especs, 400);
  double prev = 1.0 + 1e-12;
  for (int k = 1; k <= 50; ++k) {
    const double t = 6.0 * k / 50.0;
    const double q = extinction(esol, t).q;
    CHECK(q <= *esol.tau / t + 1e-12);
    if (t > *esol.tau) {
      CHECK(q < prev);
      prev = q;
    }
  }
  const auto gspec = make_geometric_spec<double>();
  const auto gsol = lagrange_solve(gspec, 400);
  for (int k = 1; k <= 50; ++k) {
    const double t = 0.98 * k / 50.0;
    CHECK(extinction(gsol, t).q <= *gsol.tau / t + 1e-12);
  }
}

TEST_CASE("three-way agreement on grids clear of the apex window") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 512);
  for (int k = 1; k <= 40; ++k) {
    const double t = 4.0 * k / 40.0;
    if (std::abs(t - *sol.tau) < 0.05) continue;
    const auto sv = extinction_series(sol, t);
    const auto fp = extinction_fixed_point(spec, t);
    REQUIRE(sv.tail_bound);
    const double tol = *sv.tail_bound + fp.error_estimate + 1e-10;
    CHECK(std::abs(sv.q - fp.q) <= tol);
  }
}

TEST_CASE("far field: q(t) psi(t)/psi(0) -> 1") {
  const auto espec = make_exp_spec<double>();
  const auto esol = lagrange_solve(espec, 400);
  double prev_gap = 1e9;
  for (double t : {4.0, 8.0, 12.0, 20.0}) {
    const double ratio = extinction(esol, t).q * espec.series.eval(t);
    const double gap = std::abs(ratio - 1.0);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(std::abs(extinction(esol, 12.0).q * espec.series.eval(12.0) - 1.0) < 0.05);
  CHECK(std::abs(extinction(esol, 20.0).q * espec.series.eval(20.0) - 1.0) < 0.02);

  // Geometric: psi(t)/t -> inf at R = 1 as well; ratio -> 1 like 1/t.
  const auto gspec = make_geometric_spec<double>(2048);
  const auto gsol = lagrange_solve(gspec, 64);
  const double ratio = extinction(gsol, 0.99).q * gspec.series.eval(0.99);
  CHECK(std::abs(ratio - 1.0) < 0.02);
}

TEST_CASE("q': zero before the apex, closed form vs finite differences after") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 400);
  for (double t : {0.2, 0.5, 0.9}) CHECK(gwps::q_derivative(sol, t) == 0.0);

  const double h = 1e-5;
  for (double t : {1.5, 2.0, 3.0}) {
    const double fd =
        (extinction_fixed_point(spec, t + h).q - extinction_fixed_point(spec, t - h).q) /
        (2 * h);
    CHECK(gwps::q_derivative(sol, t) == Catch::Approx(fd).epsilon(1e-6));
    CHECK(gwps::q_derivative(sol, t) < 0.0);
  }
  CHECK_THROWS_AS(gwps::q_derivative(sol, *sol.tau), std::domain_error);
  CHECK(gwps::q_right_slope_at_apex(sol) == Catch::Approx(-2.0).margin(1e-10));
}

TEST_CASE("apex jump: Richardson right slope -> -2/tau, left slope -> 0") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 400);
  const double tau = *sol.tau;

  std::vector<double> s;
  for (int k = 0; k < 4; ++k) {
    const double h = 1e-2 * std::pow(2.0, -k);
    s.push_back((extinction(sol, tau + h).q - 1.0) / h);
  }
  // Neville extrapolation assuming an error expansion in h.
  std::vector<double> r = s;
  for (int j = 1; j < 4; ++j)
    for (int i = 3; i >= j; --i)
      r[i] = (std::pow(2.0, j) * r[i] - r[i - 1]) / (std::pow(2.0, j) - 1.0);
  CHECK(r[3] >= -2.1);
  CHECK(r[3] <= -1.9);

  for (int k = 0; k < 3; ++k) {
    const double h = 1e-2 * std::pow(2.0, -k);
    CHECK(std::abs((extinction(sol, tau - h).q - 1.0) / h) <= 1e-8);
  }
  // The raw fixed-point value also pins the left slope down at desk scale.
  CHECK(std::abs((extinction_fixed_point(spec, tau - 1e-2).q - 1.0) / 1e-2) <= 1e-8);
}

TEST_CASE("progeny law: Borel atoms, Catalan law, bookkeeping") {
  const auto espec = make_exp_spec<double>();
  const auto esol = lagrange_solve(espec, 256);
  const auto law1 = gwps::progeny_law(esol, 1.0, 64);
  CHECK(law1.probs[1] == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(law1.probs[2] == Catch::Approx(std::exp(-2.0)).epsilon(1e-12));

  const auto gspec = make_geometric_spec<double>();
  const auto gsol = lagrange_solve(gspec, 256);
  const auto glaw = gwps::progeny_law(gsol, 0.4, 256);
  // P(|T| = n) = Catalan(n-1) 0.4^{n-1} 0.6^n.
  for (int n = 1; n <= 8; ++n)
    CHECK(glaw.probs[n] == Catch::Approx(double(gwps::catalan(n - 1)) *
                                         std::pow(0.4, n - 1) * std::pow(0.6, n))
                               .epsilon(1e-10));
  CHECK(glaw.q == Catch::Approx(1.0).margin(1e-9));
  CHECK(glaw.tail_finite >= 0.0);
  double total = 0;
  for (double p : glaw.probs) total += p;
  CHECK(total + glaw.tail_finite == Catch::Approx(glaw.q).margin(1e-9));
  CHECK(glaw.survival_mass == Catch::Approx(0.0).margin(1e-9));

  const auto at0 = gwps::progeny_law(esol, 0.0, 16);
  CHECK(at0.probs[1] == 1.0);
  CHECK(at0.q == 1.0);

  // At the geometric apex t = 1/2: P(|T| = n) = Catalan(n-1) (1/2)^{n-1}/2^n,
  // the critical law whose full mass is 1.
  const auto crit = gwps::progeny_law(gsol, 0.5, 256);
  for (int n = 1; n <= 8; ++n)
    CHECK(crit.probs[n] == Catch::Approx(double(gwps::catalan(n - 1)) *
                                         std::pow(0.5, n - 1) * std::pow(2.0, -n))
                               .epsilon(1e-9));
}

TEST_CASE("g_t: degenerate case, pgf identities, rescaled Lagrange equation") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 256);

  const auto g0 = gwps::gt_coeffs(sol, 0.0, 16);
  CHECK(g0.at(1) == 1.0);
  for (int n = 2; n <= 16; ++n) CHECK(g0.at(n) == 0.0);

  for (double t : {0.5, 2.0}) {
    const auto gt = gwps::gt_coeffs(sol, t, 256);
    // Coefficient 1 is P(Y_t = 0) = b_0/psi(t).
    CHECK(gt.at(1) == Catch::Approx(1.0 / spec.series.eval(t)).epsilon(1e-12));
    // g_t(1) = q(t) up to the finite-size tail.
    const auto law = gwps::progeny_law(sol, t, 256);
    CHECK(gt.eval(1.0) == Catch::Approx(law.q).margin(law.tail_finite + 1e-9));
    // Rescaled Lagrange equation g_t = z psi_t(g_t), coefficientwise.
    const gwps::PowerSeries<double> psi_t(
        gwps::khinchin_mass_table(spec, t, spec.series.order()));
    const auto recomposed = gwps::shift_up(gwps::compose(psi_t.truncated(256), gt));
    for (int n = 0; n <= 256; ++n)
      CHECK(recomposed.at(n) == Catch::Approx(gt.at(n)).margin(1e-10));
  }
  // R_{g_t} = rho / (t/psi(t)); at t = 2 for exp this is e/2.
  const double x = 2.0 / spec.series.eval(2.0);
  CHECK(sol.rho / x == Catch::Approx(M_E / 2.0).epsilon(1e-10));
  CHECK(sol.rho / x >= 1.0);
}

TEST_CASE("offspring sampler: empirical mean, support, degenerate t") {
  const auto spec = make_exp_spec<double>();
  OffspringSampler sampler(spec, 1.0);
  Rng rng(2027);
  const long draws = 1000000;
  double sum = 0;
  for (long i = 0; i < draws; ++i) sum += sampler.sample(rng);
  const double mean = sum / draws;  // Poisson(1): mean 1, sigma 1
  CHECK(std::abs(mean - 1.0) <= 3.0 / std::sqrt(double(draws)));

  OffspringSampler binary(make_polynomial_spec<double>({1, 0, 1}, "1+z^2"), 1.0);
  for (int i = 0; i < 2000; ++i) {
    const int k = binary.sample(rng);
    CHECK((k == 0 || k == 2));
  }

  OffspringSampler at0(spec, 0.0);
  for (int i = 0; i < 100; ++i) CHECK(at0.sample(rng) == 0);
}

TEST_CASE("progeny sampler: exact atoms, survival atom, tail guard") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 512);

  // Subcritical: never infinite, P(1) empirically right.
  const auto sub = gwps::progeny_law(sol, 0.5, 512);
  REQUIRE(sub.tail_finite < 1e-9);
  gwps::ProgenySampler ssub(sub);
  Rng rng(11);
  long n1 = 0;
  const long draws = 200000;
  for (long i = 0; i < draws; ++i) {
    const auto v = ssub.sample(rng);
    REQUIRE(v.has_value());
    if (*v == 1) ++n1;
  }
  const double p1 = sub.probs[1];
  CHECK(std::abs(double(n1) / draws - p1) <= 3 * std::sqrt(p1 * (1 - p1) / draws));

  // Supercritical: infinite shows up with the survival mass.
  const auto sup = gwps::progeny_law(sol, 2.0, 512);
  REQUIRE(sup.tail_finite < 1e-9);
  gwps::ProgenySampler ssup(sup);
  long inf_count = 0;
  for (long i = 0; i < draws; ++i)
    if (!ssup.sample(rng)) ++inf_count;
  const double sm = sup.survival_mass;
  CHECK(std::abs(double(inf_count) / draws - sm) <= 3 * std::sqrt(sm * (1 - sm) / draws));

  // Near-critical law with a small N leaves too much tail: constructor balks.
  const auto fat = gwps::progeny_law(sol, 1.05, 32);
  CHECK(fat.tail_finite > 1e-9);
  CHECK_THROWS_AS(gwps::ProgenySampler(fat), std::invalid_argument);
}

TEST_CASE("simulate_tree: single-node case, subcritical certainty") {
  const auto spec = make_exp_spec<double>();
  OffspringSampler sampler(spec, 1.0);
  // Budget 1: extinct iff the root has no children, so the extinct fraction
  // estimates P(Y_1 = 0) = 1/e.
  long extinct = 0;
  const long runs = 100000;
  for (long i = 0; i < runs; ++i) {
    Rng rng = Rng::for_chunk(5, i);
    if (gwps::simulate_tree(sampler, 1, rng).status == gwps::SimOutcome::Status::Extinct)
      ++extinct;
  }
  const double p = std::exp(-1.0);
  CHECK(std::abs(double(extinct) / runs - p) <= 3 * std::sqrt(p * (1 - p) / runs));

  // Subcritical far from tau: every run dies within a 10^4 budget.
  const auto mc = gwps::mc_extinction(spec, 0.5, 20000, 10000, 99, 2);
  CHECK(mc.fraction == 1.0);
  CHECK(mc.censored == 0);
}

TEST_CASE("simulate_tree agrees with the analytic extinction probability") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 400);
  const auto mc = gwps::mc_extinction(spec, 2.0, 20000, 2000, 4242, 4);
  const double q = extinction(sol, 2.0).q;
  CHECK(std::abs(mc.fraction - q) <= mc.ci3 + 1e-6);
  CHECK(mc.censored > 0);  // supercritical: survivors hit the budget
}

TEST_CASE("Monte Carlo runs are reproducible at any worker count") {
  const auto spec = make_exp_spec<double>();
  const auto a = gwps::mc_extinction(spec, 2.0, 30000, 500, 7, 1);
  const auto b = gwps::mc_extinction(spec, 2.0, 30000, 500, 7, 4);
  const auto c = gwps::mc_extinction(spec, 2.0, 30000, 500, 7, 4);
  CHECK(a.extinct == b.extinct);
  CHECK(a.censored == b.censored);
  CHECK(a.extinct_size_total == b.extinct_size_total);
  CHECK(a.max_extinct_size == b.max_extinct_size);
  CHECK(a.max_generations == b.max_generations);
  CHECK(b.extinct == c.extinct);
  CHECK(b.extinct_size_total == c.extinct_size_total);
  // Different seed moves the tallies.
  const auto d = gwps::mc_extinction(spec, 2.0, 30000, 500, 8, 4);
  CHECK(d.extinct != a.extinct);
}

TEST_CASE("conditional size law: exact values and zero-denominator guard") {
  const auto geo = make_geometric_spec<Rational>(16);
  CHECK(gwps::conditional_size_prob(gwps::pred_all(), geo, 5) == 1);
  CHECK(gwps::conditional_size_prob(gwps::pred_root_outdegree(1), geo, 3) == Rational(1, 2));
  CHECK(gwps::conditional_size_prob(gwps::pred_root_outdegree(1), geo, 5) == Rational(5, 14));

  const auto bin = make_polynomial_spec<Rational>({1, 0, 1}, "1+z^2");
  CHECK_THROWS_AS(gwps::conditional_size_prob(gwps::pred_all(), bin, 2), std::domain_error);
}

TEST_CASE("conditional size law is independent of t (Monte Carlo)") {
  const auto geo = make_geometric_spec<double>();
  const double exact = 5.0 / 14.0;  // R_5/A_5 for root-outdegree 1
  for (double t : {0.3, 0.7}) {
    const auto mc = gwps::mc_conditional_size(geo, t, 5, gwps::pred_root_outdegree(1), 40000,
                                              64, 321, 2);
    REQUIRE(mc.size_hits > 200);
    CHECK(std::abs(mc.fraction - exact) <= 3 * mc.sigma + 1e-9);
  }
}

TEST_CASE("conditioning on extinction: normalization and Monte Carlo check") {
  const auto spec = make_exp_spec<double>();
  const auto sol = lagrange_solve(spec, 400);

  // pred = all gives 1 within the reported tail.
  const auto all_sub = gwps::conditional_extinction_prob(gwps::pred_all(), sol, 0.7, 12);
  CHECK(std::abs(all_sub.value - 1.0) <= all_sub.tail_bound + 1e-12);

  // Subcritical: q = 1, so the value is the bare partial sum.
  double partial = 0;
  const double x = 0.7 / spec.series.eval(0.7);
  for (int n = 1; n <= 12; ++n)
    partial += gwps::sum_weights(n, spec) * std::pow(x, n) / 0.7;
  CHECK(all_sub.value == Catch::Approx(partial).epsilon(1e-12));

  // Supercritical MC: singleton trees among extinct ones.
  const auto single = gwps::conditional_extinction_prob(gwps::pred_root_outdegree(0), sol, 2.0,
                                                        12);
  long extinct = 0, singles = 0;
  OffspringSampler sampler(spec, 2.0);
  for (long i = 0; i < 20000; ++i) {
    Rng rng = Rng::for_chunk(13, i);
    const auto tree = gwps::simulate_plane_tree(sampler, 1000, rng);
    if (tree) {
      ++extinct;
      if (tree->children.empty()) ++singles;
    }
  }
  const double mc_frac = double(singles) / double(extinct);
  const double sigma = std::sqrt(mc_frac * (1 - mc_frac) / double(extinct));
  CHECK(std::abs(mc_frac - single.value) <= 3 * sigma + single.tail_bound);
}

TEST_CASE("fixed point is the smallest root of psi_t(q) = q") {
  const auto spec = make_exp_spec<double>();
  for (double t : {1.5, 2.0, 3.0}) {
    const double fp = extinction_fixed_point(spec, t).q;
    const double psi_t = spec.series.eval(t);
    double smallest_bracketed = 2.0;
    double prev_val = spec.series.eval(0.0) / psi_t - 0.0;
    for (int k = 1; k <= 2000; ++k) {
      const double q = double(k) / 2000.0;
      const double val = spec.series.eval(t * q) / psi_t - q;
      if ((prev_val > 0) != (val > 0)) {
        // bisect the sign change
        double lo = double(k - 1) / 2000.0, hi = q;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          ((spec.series.eval(t * mid) / psi_t - mid > 0) == (prev_val > 0) ? lo : hi) = mid;
        }
        smallest_bracketed = std::min(smallest_bracketed, 0.5 * (lo + hi));
      }
      prev_val = val;
    }
    CHECK(fp <= smallest_bracketed + 1e-9);
    CHECK(fp == Catch::Approx(smallest_bracketed).margin(1e-9));
  }
}

TEST_CASE("simulated plane trees follow the exact tree measure") {
  const auto geo = make_geometric_spec<double>();
  OffspringSampler sampler(geo, 0.4);
  // P(T = path of 2 nodes) at t = 0.4 under 1/(1-z): t/psi(t)^2 = 0.4*0.36.
  const double target = 0.4 * 0.36;
  long hits = 0;
  const long runs = 100000;
  const auto path2 = gwps::parse_parens("(())");
  for (long i = 0; i < runs; ++i) {
    Rng rng = Rng::for_chunk(17, i);
    const auto tree = gwps::simulate_plane_tree(sampler, 200, rng);
    if (tree && *tree == path2) ++hits;
  }
  CHECK(std::abs(double(hits) / runs - target) <=
        3 * std::sqrt(target * (1 - target) / runs));
}
