#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gwps/family.hpp"
#include "gwps/lagrange.hpp"
#include "gwps/rng.hpp"
#include "gwps/trees.hpp"

namespace gwps {

/// Near the apex the coefficient series loses its geometric tail (it decays
/// only like n^{-3/2} at t = tau), so extinction queries inside this relative
/// window route to the fixed-point iteration instead.
inline constexpr double kApexRoutingWindow = 0.05;

struct ExtinctionValue {
  double q = 0;
  std::optional<double> tail_bound;  // truncation tail over t; K* specs only
  bool slow_convergence = false;     // t within the apex routing window
};

/// q(t) = g(t/psi(t)) / t, the coefficient formula. Exact up to the series
/// truncation; equals 1 within the tail bound for t <= tau.
inline ExtinctionValue extinction_series(const LagrangeSolution<double>& sol, double t) {
  const OffspringSpec<double>& spec = sol.spec;
  detail::check_domain(spec, t);
  if (!(t > 0)) throw std::domain_error("extinction_series: t must be positive");
  const double x = std::min(t / spec.series.eval(t), sol.rho);
  const GEval g = g_eval(sol, x);
  ExtinctionValue out;
  out.q = g.value / t;
  if (g.tail_bound) out.tail_bound = *g.tail_bound / t;
  out.slow_convergence = sol.tau && std::abs(t - *sol.tau) < kApexRoutingWindow * *sol.tau;
  return out;
}

struct FixedPointResult {
  double q = 0;
  long iterations = 0;
  bool converged = false;
  double error_estimate = 0;  // last increment scaled by the contraction estimate
};

/// Smallest nonnegative fixed point of psi_t(z) = psi(tz)/psi(t), iterated
/// from q_0 = 0; the sequence increases monotonically to q(t).
inline FixedPointResult extinction_fixed_point(const OffspringSpec<double>& spec, double t,
                                               double tol = 1e-14, long max_iter = 1000000) {
  detail::check_domain(spec, t);
  if (!(t > 0)) throw std::domain_error("extinction_fixed_point: t must be positive");
  const double psi_t = spec.series.eval(t);
  FixedPointResult out;
  double q = 0, prev_step = 0;
  for (long k = 0; k < max_iter; ++k) {
    const double next = spec.series.eval(t * q) / psi_t;
    const double step = next - q;
    q = next;
    out.iterations = k + 1;
    if (step <= tol) {
      const double rate = prev_step > 0 ? step / prev_step : 0.0;
      out.error_estimate = rate < 1.0 ? step * rate / (1.0 - rate) : step;
      out.converged = true;
      break;
    }
    prev_step = step;
  }
  out.q = q;
  if (!out.converged) out.error_estimate = prev_step;
  return out;
}

enum class ExtinctionMethod { Degenerate, ThresholdLaw, FixedPoint, Series };

inline const char* to_string(ExtinctionMethod m) {
  switch (m) {
    case ExtinctionMethod::Degenerate: return "degenerate-t0";
    case ExtinctionMethod::ThresholdLaw: return "threshold-law";
    case ExtinctionMethod::FixedPoint: return "fixed-point";
    case ExtinctionMethod::Series: return "series";
  }
  return "?";
}

struct ExtinctionReport {
  double q = 0;
  ExtinctionMethod method = ExtinctionMethod::Series;
  double error_bound = 0;
};

/// The library's extinction query. Dispatch:
///   t = 0            -> 1 (degenerate single-node law),
///   t <= tau         -> 1 exactly (m(t) <= 1: a.s. extinction; at t = tau
///                       continuity defines q = 1),
///   |t-tau| < 5% tau -> fixed point (series tail is no longer geometric),
///   otherwise        -> coefficient series with its tail bound.
inline ExtinctionReport extinction(const LagrangeSolution<double>& sol, double t) {
  const OffspringSpec<double>& spec = sol.spec;
  detail::check_domain(spec, t);
  if (t == 0) return {1.0, ExtinctionMethod::Degenerate, 0.0};
  // The mean is increasing with m(tau) = 1, so t <= tau and m(t) <= 1 agree;
  // the apex is the sharper test numerically (|m(tau)-1| <= 1e-12 by
  // construction, so comparing m against 1 at t = tau is a coin flip).
  const bool subcritical = sol.tau ? t <= *sol.tau : khinchin_mean(spec, t) <= 1.0;
  if (subcritical) return {1.0, ExtinctionMethod::ThresholdLaw, 0.0};
  if (sol.tau && std::abs(t - *sol.tau) < kApexRoutingWindow * *sol.tau) {
    const FixedPointResult fp = extinction_fixed_point(spec, t);
    return {fp.q, ExtinctionMethod::FixedPoint, fp.error_estimate};
  }
  const ExtinctionValue sv = extinction_series(sol, t);
  if (!sv.tail_bound || *sv.tail_bound > 1e-10) {
    const FixedPointResult fp = extinction_fixed_point(spec, t);
    return {fp.q, ExtinctionMethod::FixedPoint, fp.error_estimate};
  }
  return {sv.q, ExtinctionMethod::Series, *sv.tail_bound};
}

/// Closed form q'(t) = (q/t) [ (1 - m(t)) / (1 - m(t q)) - 1 ]. Undefined at
/// t = tau, where the derivative jumps; use q_right_slope_at_apex for the
/// right limit (the left limit is 0).
inline double q_derivative(const LagrangeSolution<double>& sol, double t) {
  const OffspringSpec<double>& spec = sol.spec;
  detail::check_domain(spec, t);
  if (!(t > 0)) throw std::domain_error("q_derivative: t must be positive");
  if (sol.tau && std::abs(t - *sol.tau) <= 1e-12 * std::max(1.0, *sol.tau))
    throw std::domain_error("q_derivative: derivative has a jump at the apex t = tau; "
                            "query the one-sided limits instead");
  const double q = extinction(sol, t).q;
  if (q == 1.0) return 0.0;  // t < tau: q is constant 1
  const double num = 1.0 - khinchin_mean(spec, t);
  const double den = 1.0 - khinchin_mean(spec, t * q);
  return q / t * (num / den - 1.0);
}

/// lim_{t -> tau+} (q(t) - 1)/(t - tau) = -2/tau.
inline double q_right_slope_at_apex(const LagrangeSolution<double>& sol) {
  if (!sol.tau) throw std::domain_error("q_right_slope_at_apex: spec has no apex");
  return -2.0 / *sol.tau;
}

/// Total-progeny law at parameter t: probs[n] = P(|T_t| = n) for n <= N,
/// the finite part summing to q(t), plus the survival atom 1 - q(t).
struct ProgenyLaw {
  double t = 0;
  std::vector<double> probs;  // index n, probs[0] = 0
  double q = 1;               // extinction probability (fixed-point value)
  double survival_mass = 0;   // 1 - q
  double tail_finite = 0;     // q - sum(probs), clamped at 0
  bool q_converged = true;
};

inline ProgenyLaw progeny_law(const LagrangeSolution<double>& sol, double t, int N) {
  const OffspringSpec<double>& spec = sol.spec;
  detail::check_domain(spec, t);
  if (N < 1) throw std::invalid_argument("progeny_law: N must be >= 1");
  N = std::min(N, sol.order());
  ProgenyLaw law;
  law.t = t;
  law.probs.assign(static_cast<std::size_t>(N) + 1, 0.0);
  if (t == 0) {  // T_0 is the single-node tree
    law.probs[1] = 1.0;
    law.q = 1.0;
    law.survival_mass = 0.0;
    law.tail_finite = 0.0;
    return law;
  }
  // P(|T_t| = n) = A_n t^{n-1}/psi(t)^n = (A_n rho^n) u^n / t, u = x/rho.
  const double x = t / spec.series.eval(t);
  const double u = std::min(x / sol.rho, 1.0);
  double un = 1, total = 0;
  for (int n = 1; n <= N; ++n) {
    un *= u;
    law.probs[static_cast<std::size_t>(n)] = sol.scaled[static_cast<std::size_t>(n)] * un / t;
    total += law.probs[static_cast<std::size_t>(n)];
  }
  const FixedPointResult fp = extinction_fixed_point(spec, t);
  law.q = fp.q;
  law.q_converged = fp.converged;
  law.survival_mass = 1.0 - law.q;
  law.tail_finite = std::max(law.q - total, 0.0);
  return law;
}

/// Coefficients of g_t(z) = g(t z / psi(t)) / t, the probability generating
/// function of the total progeny on its finite part; g_t(1) = q(t) and the
/// radius is rho / (t/psi(t)) >= 1.
inline PowerSeries<double> gt_coeffs(const LagrangeSolution<double>& sol, double t, int N) {
  detail::check_domain(sol.spec, t);
  N = std::min(N, sol.order());
  std::vector<double> c(static_cast<std::size_t>(N) + 1, 0.0);
  if (t == 0) {  // degenerate case: psi_0 = 1 and g_0(z) = z
    if (N >= 1) c[1] = 1.0;
    return PowerSeries<double>(std::move(c));
  }
  const double x = t / sol.spec.series.eval(t);
  const double u = std::min(x / sol.rho, 1.0);
  double un = 1;
  for (int n = 1; n <= N; ++n) {
    un *= u;
    c[static_cast<std::size_t>(n)] = sol.scaled[static_cast<std::size_t>(n)] * un / t;
  }
  return PowerSeries<double>(std::move(c));
}

/// Inverse-CDF sampler for the offspring law Y_t. The table extends until
/// the unassigned tail is below 1e-12; that remainder is folded into the
/// last bucket.
class OffspringSampler {
 public:
  OffspringSampler(const OffspringSpec<double>& spec, double t) {
    const std::vector<double> mass = khinchin_mass_table(spec, t, spec.series.order());
    double cum = 0;
    std::size_t last = 0;
    for (std::size_t j = 0; j < mass.size(); ++j) {
      cum += mass[j];
      cdf_.push_back(cum);
      last = j;
      if (1.0 - cum < 1e-12) break;
    }
    cdf_[last] = 1.0;
  }

  int sample(Rng& rng) const {
    const double u = rng.next_double();
    int k = 0;
    while (u >= cdf_[static_cast<std::size_t>(k)]) ++k;
    return k;
  }

  int max_value() const { return static_cast<int>(cdf_.size()) - 1; }

 private:
  std::vector<double> cdf_;
};

struct SimOutcome {
  enum class Status { Extinct, Censored };
  Status status = Status::Extinct;
  long size = 0;        // exact node count when extinct; nodes generated so far when censored
  int generations = 0;  // index of the deepest populated generation (root = 0)
  std::uint64_t seed = 0;
};

/// Breadth-first realization of the process: every frontier node draws its
/// offspring count independently. Extinct when the frontier empties within
/// the node budget; censored (possibly infinite tree) once the budget is hit.
inline SimOutcome simulate_tree(const OffspringSampler& sampler, long node_budget, Rng& rng,
                                std::uint64_t seed = 0) {
  if (node_budget < 1) throw std::invalid_argument("simulate_tree: node budget must be >= 1");
  SimOutcome out;
  out.seed = seed;
  long size = 1, frontier = 1;
  int depth = 0;
  while (frontier > 0) {
    long next = 0;
    for (long i = 0; i < frontier; ++i) {
      next += sampler.sample(rng);
      if (size + next > node_budget) {
        out.status = SimOutcome::Status::Censored;
        out.size = size + next;
        out.generations = depth + 1;
        return out;
      }
    }
    if (next == 0) break;
    size += next;
    frontier = next;
    ++depth;
  }
  out.status = SimOutcome::Status::Extinct;
  out.size = size;
  out.generations = depth;
  return out;
}

/// Same process, but materializes the plane tree (offspring counts assigned
/// in breadth-first order). nullopt when censored by the budget.
inline std::optional<PlaneTree> simulate_plane_tree(const OffspringSampler& sampler,
                                                    long node_budget, Rng& rng) {
  std::vector<int> counts;
  long produced = 1;
  std::size_t head = 0;
  while (head < static_cast<std::size_t>(produced)) {
    const int k = sampler.sample(rng);
    produced += k;
    if (produced > node_budget) return std::nullopt;
    counts.push_back(k);
    ++head;
  }
  std::vector<long> first(counts.size() + 1, 1);
  for (std::size_t i = 0; i < counts.size(); ++i) first[i + 1] = first[i] + counts[i];
  const std::function<PlaneTree(long)> build = [&](long i) {
    PlaneTree t;
    t.children.reserve(static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]));
    for (long c = 0; c < counts[static_cast<std::size_t>(i)]; ++c)
      t.children.push_back(build(first[static_cast<std::size_t>(i)] + c));
    return t;
  };
  return build(0);
}

/// Inverse-CDF sampler over the total-progeny law: finite sizes with their
/// exact probabilities, `infinite` (nullopt) with the survival mass. The
/// unassigned finite tail must be below 1e-9 (it is folded into `infinite`).
class ProgenySampler {
 public:
  explicit ProgenySampler(const ProgenyLaw& law) {
    if (law.tail_finite > 1e-9)
      throw std::invalid_argument(
          "ProgenySampler: finite-size tail beyond the truncation exceeds 1e-9; rebuild the "
          "law with larger N");
    double cum = 0;
    cdf_.reserve(law.probs.size());
    for (double p : law.probs) {
      cum += p;
      cdf_.push_back(cum);
    }
  }

  /// n >= 1 with P(|T_t| = n), or nullopt ("infinite") with mass 1 - q.
  std::optional<long> sample(Rng& rng) const {
    const double u = rng.next_double();
    if (u >= cdf_.back()) return std::nullopt;
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<long>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

inline std::optional<long> sample_progeny_exact(const ProgenySampler& sampler, Rng& rng) {
  return sampler.sample(rng);
}

/// P(T_t in R | |T_t| = n) = R_n / A_n: independent of t, so it takes no t.
/// Exact in the rational backend. Throws when A_n = 0 (off-lattice n).
template <class S>
S conditional_size_prob(const SubclassPredicate& pred, const OffspringSpec<S>& spec, int n) {
  const S denom = sum_weights(n, spec, pred_all());
  if (denom == S(0))
    throw std::domain_error("conditional_size_prob: A_n = 0 at n = " + std::to_string(n) +
                            " (off the lattice of Q_psi)");
  return sum_weights(n, spec, pred) / denom;
}

struct ConditionalExtinction {
  double value = 0;       // P(T_t in R | extinction), truncated estimate
  double tail_bound = 0;  // (q - sum_{n <= cap} P(|T_t| = n)) / q
  bool tail_dominates = false;
};

/// P(T_t in R | extinction) = (1/q) sum_n R_n t^{n-1}/psi(t)^n, summed over
/// the oracle range n <= min(N, 12); the neglected tail is reported and
/// flagged when it exceeds the requested precision.
inline ConditionalExtinction conditional_extinction_prob(const SubclassPredicate& pred,
                                                         const LagrangeSolution<double>& sol,
                                                         double t, int N,
                                                         double precision = 1e-6) {
  const OffspringSpec<double>& spec = sol.spec;
  detail::check_domain(spec, t);
  if (!(t > 0)) throw std::domain_error("conditional_extinction_prob: t must be positive");
  const int cap = std::min({N, kMaxEnumerationSize, sol.order()});
  const double x = t / spec.series.eval(t);
  double partial = 0;
  for (int n = 1; n <= cap; ++n) {
    const double rn = to_double(sum_weights(n, spec, pred));
    if (rn > 0) partial += rn * std::pow(x, n) / t;
  }
  const ExtinctionReport ext = extinction(sol, t);
  const ProgenyLaw law = progeny_law(sol, t, cap);
  double finite_cap = 0;
  for (int n = 1; n <= cap; ++n) finite_cap += law.probs[static_cast<std::size_t>(n)];
  ConditionalExtinction out;
  out.value = partial / ext.q;
  out.tail_bound = std::max(ext.q - finite_cap, 0.0) / ext.q;
  out.tail_dominates = out.tail_bound > precision;
  return out;
}

/// Monte Carlo extinction estimate. Chunked per tree: tree i always uses the
/// stream Rng::for_chunk(seed, i) and the tallies are integers, so the
/// result is identical for every worker count.
struct McExtinction {
  long runs = 0;
  long extinct = 0;
  long censored = 0;
  double fraction = 0;  // extinct / runs
  double sigma = 0;     // sqrt(p(1-p)/runs)
  double ci3 = 0;       // 3 sigma
  std::uint64_t extinct_size_total = 0;
  long max_extinct_size = 0;
  int max_generations = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};

inline McExtinction mc_extinction(const OffspringSpec<double>& spec, double t, long runs,
                                  long node_budget, std::uint64_t seed, int workers = 1) {
  if (runs < 1) throw std::invalid_argument("mc_extinction: runs must be >= 1");
  workers = static_cast<int>(std::clamp<long>(workers, 1, runs));
  const OffspringSampler sampler(spec, t);

  struct Tally {
    long extinct = 0, censored = 0, max_size = 0;
    std::uint64_t size_total = 0;
    int max_gen = 0;
  };
  std::vector<Tally> tallies(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    const long lo = runs * w / workers, hi = runs * (w + 1) / workers;
    Tally& tally = tallies[static_cast<std::size_t>(w)];
    for (long i = lo; i < hi; ++i) {
      Rng rng = Rng::for_chunk(seed, static_cast<std::uint64_t>(i));
      const SimOutcome o = simulate_tree(sampler, node_budget, rng, seed);
      tally.max_gen = std::max(tally.max_gen, o.generations);
      if (o.status == SimOutcome::Status::Extinct) {
        ++tally.extinct;
        tally.size_total += static_cast<std::uint64_t>(o.size);
        tally.max_size = std::max(tally.max_size, o.size);
      } else {
        ++tally.censored;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }

  McExtinction out;
  out.runs = runs;
  out.seed = seed;
  out.workers = workers;
  for (const Tally& tally : tallies) {
    out.extinct += tally.extinct;
    out.censored += tally.censored;
    out.extinct_size_total += tally.size_total;
    out.max_extinct_size = std::max(out.max_extinct_size, tally.max_size);
    out.max_generations = std::max(out.max_generations, tally.max_gen);
  }
  out.fraction = static_cast<double>(out.extinct) / static_cast<double>(runs);
  out.sigma = std::sqrt(out.fraction * (1.0 - out.fraction) / static_cast<double>(runs));
  out.ci3 = 3.0 * out.sigma;
  return out;
}

/// Monte Carlo tally of pred among simulated trees of exactly n nodes, for
/// the t-independence checks of the conditional law.
struct McConditional {
  long runs = 0;
  long size_hits = 0;  // trees with |T| = n
  long pred_hits = 0;  // of those, trees in the subclass
  double fraction = 0;
  double sigma = 0;
};

inline McConditional mc_conditional_size(const OffspringSpec<double>& spec, double t, int n,
                                         const SubclassPredicate& pred, long runs,
                                         long node_budget, std::uint64_t seed, int workers = 1) {
  workers = static_cast<int>(std::clamp<long>(workers, 1, runs));
  const OffspringSampler sampler(spec, t);
  std::vector<std::pair<long, long>> tallies(static_cast<std::size_t>(workers), {0, 0});
  auto work = [&](int w) {
    const long lo = runs * w / workers, hi = runs * (w + 1) / workers;
    auto& [size_hits, pred_hits] = tallies[static_cast<std::size_t>(w)];
    for (long i = lo; i < hi; ++i) {
      Rng rng = Rng::for_chunk(seed, static_cast<std::uint64_t>(i));
      const auto tree = simulate_plane_tree(sampler, node_budget, rng);
      if (tree && tree_size(*tree) == n) {
        ++size_hits;
        if (pred.accepts(*tree)) ++pred_hits;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  McConditional out;
  out.runs = runs;
  for (const auto& [s, p] : tallies) {
    out.size_hits += s;
    out.pred_hits += p;
  }
  if (out.size_hits > 0) {
    out.fraction = static_cast<double>(out.pred_hits) / static_cast<double>(out.size_hits);
    out.sigma = std::sqrt(out.fraction * (1.0 - out.fraction) /
                          static_cast<double>(out.size_hits));
  }
  return out;
}

}  // namespace gwps
