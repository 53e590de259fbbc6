#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "common.hpp"
#include "distributions.hpp"
#include "rng.hpp"

namespace tiltcond {

/// A solved tilt parameter with residual and bracket diagnostics.
struct TiltSolution {
  double theta = 0.0;
  double residual = 0.0;  // |mbar(theta) - target|
  int iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

struct SolveOptions {
  double tol_rel = 1e-12;            // residual tolerance, scaled by max(1, |target|)
  std::optional<double> hint;        // warm start (previous t_{i,n} in sequential passes)
  int max_expansions = 200;
  int max_iterations = 400;
};

inline double tilted_density(const DistributionFamily& fam, int j, double theta, double x) {
  fam.require_theta(theta);
  return fam.component(j).tilted(theta).density(x);
}

inline double log_tilted_density(const DistributionFamily& fam, int j, double theta, double x) {
  fam.require_theta(theta);
  return fam.component(j).tilted(theta).log_density(x);
}

inline double sample_tilted(const DistributionFamily& fam, int j, double theta, RngStream& rng) {
  fam.require_theta(theta);
  return fam.component(j).tilted(theta).sample(rng);
}

/// mbar_{p,q}(theta): mean of the component means over the range.
inline double mean_bar(const DistributionFamily& fam, IndexRange range, double theta) {
  fam.require_range(range);
  fam.require_theta(theta);
  if (fam.homogeneous()) return fam.component(range.lo).mean(theta);
  double sum = 0.0;
  for (int j = range.lo; j <= range.hi; ++j) sum += fam.component(j).mean(theta);
  return sum / range.count();
}

namespace detail {

inline double clamp_to_domain(double theta, const Interval& dom) {
  double lo = dom.lo, hi = dom.hi;
  if (std::isfinite(lo)) lo += std::max(1e-9, std::isfinite(hi) ? 1e-9 * (hi - lo) : 0.0);
  if (std::isfinite(hi)) hi -= std::max(1e-9, std::isfinite(lo) ? 1e-9 * (hi - lo) : 0.0);
  return std::min(std::max(theta, lo), hi);
}

}  // namespace detail

/// Solves mbar_{p,q}(theta) = target for the unique theta in the mgf domain.
/// Geometric bracket expansion from the start point (0 or the warm-start
/// hint), then a bisection/secant hybrid on the monotone residual.
inline TiltSolution solve_mean_tilt(const DistributionFamily& fam, IndexRange range,
                                    double target, const SolveOptions& opt = {}) {
  fam.require_range(range);
  if (!fam.support().contains_strict(target)) {
    throw TargetOutsideSupport("target " + std::to_string(target) + " outside support " +
                               to_string(fam.support()));
  }
  const Interval dom = fam.theta_domain();
  const double tol = opt.tol_rel * std::max(1.0, std::abs(target));
  const auto residual = [&](double th) { return mean_bar(fam, range, th) - target; };

  int evals = 0;
  double start = detail::clamp_to_domain(opt.hint.value_or(0.0), dom);
  double f_start = residual(start);
  ++evals;
  if (std::abs(f_start) <= tol) {
    return {start, std::abs(f_start), evals, start, start};
  }

  // Expand away from the start on the side where the target lies. mbar is
  // strictly increasing, so one direction suffices.
  const bool go_up = f_start < 0.0;
  double lo, hi, f_lo, f_hi;
  if (go_up) {
    lo = start;
    f_lo = f_start;
    hi = lo;
    f_hi = f_lo;
  } else {
    hi = start;
    f_hi = f_start;
    lo = hi;
    f_lo = f_hi;
  }
  double step = std::max(1e-3, 1e-3 * std::abs(start));
  bool bracketed = false;
  for (int e = 0; e < opt.max_expansions; ++e) {
    double cand = go_up ? hi + step : lo - step;
    const double clamped = detail::clamp_to_domain(cand, dom);
    const bool at_edge = (clamped != cand);
    cand = clamped;
    const double f_cand = residual(cand);
    ++evals;
    if (go_up) {
      if (f_cand >= 0.0) {
        hi = cand;
        f_hi = f_cand;
        bracketed = true;
        break;
      }
      hi = cand;
      f_hi = f_cand;
      lo = cand;
      f_lo = f_cand;
    } else {
      if (f_cand <= 0.0) {
        lo = cand;
        f_lo = f_cand;
        bracketed = true;
        break;
      }
      lo = cand;
      f_lo = f_cand;
      hi = cand;
      f_hi = f_cand;
    }
    if (at_edge) break;  // already at the domain margin with the wrong sign
    step *= 2.0;
  }
  if (!bracketed) {
    throw BracketFailure("could not bracket target " + std::to_string(target) +
                         " within the mgf domain; target too close to the support boundary");
  }
  if (f_lo > 0.0 || f_hi < 0.0) {
    throw BracketFailure("bracket sign inconsistency");
  }

  // Hybrid: secant candidate accepted only when it lands strictly inside the
  // bracket and shrinks it enough, else bisect.
  double x = 0.5 * (lo + hi), fx = 0.0;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    double cand;
    const double denom = f_hi - f_lo;
    if (denom != 0.0) {
      cand = lo - f_lo * (hi - lo) / denom;
      const double margin = 0.01 * (hi - lo);
      if (!(cand > lo + margin && cand < hi - margin)) cand = 0.5 * (lo + hi);
    } else {
      cand = 0.5 * (lo + hi);
    }
    x = cand;
    fx = residual(x);
    ++evals;
    if (std::abs(fx) <= tol) break;
    if (fx < 0.0) {
      lo = x;
      f_lo = fx;
    } else {
      hi = x;
      f_hi = fx;
    }
    if (hi - lo <= 4.0 * std::abs(x) * std::numeric_limits<double>::epsilon() + 1e-300) {
      break;  // bracket collapsed to machine resolution
    }
  }
  TiltSolution sol;
  sol.theta = x;
  sol.residual = std::abs(fx);
  sol.iterations = evals;
  sol.bracket_lo = lo;
  sol.bracket_hi = hi;
  return sol;
}

/// Summed cumulant data for an index range at a tilt. mu3 is the summed third
/// cumulant; mu4..mu6 are sums of per-component CENTERED moments, which is
/// what the expansion polynomials consume (their lambda corrections subtract
/// 3*sum_s4 and 10*sum_mu3_s2 to recover cumulant sums).
struct AggregateMoments {
  IndexRange range;
  double theta = 0.0;
  double s2 = 0.0;
  double sigma = 0.0;
  double mu3 = 0.0;
  double mu4 = 0.0;
  double mu5 = 0.0;
  double mu6 = 0.0;
  double sum_s4 = 0.0;      // sum of (s_j^2)^2
  double sum_mu3_s2 = 0.0;  // sum of mu_j^3 * s_j^2
  double lambda_sum = 0.0;  // sum of mu_j^4 - 3 (s_j^2)^2
};

inline AggregateMoments aggregate_moments(const DistributionFamily& fam, double theta,
                                          IndexRange range) {
  fam.require_range(range);
  fam.require_theta(theta);
  AggregateMoments agg;
  agg.range = range;
  agg.theta = theta;
  const auto add = [&agg](const CenteredMoments& m, double count) {
    agg.s2 += count * m.s2;
    agg.mu3 += count * m.mu3;
    agg.mu4 += count * m.mu4;
    agg.mu5 += count * m.mu5;
    agg.mu6 += count * m.mu6;
    agg.sum_s4 += count * m.s2 * m.s2;
    agg.sum_mu3_s2 += count * m.mu3 * m.s2;
    agg.lambda_sum += count * (m.mu4 - 3.0 * m.s2 * m.s2);
  };
  if (fam.homogeneous()) {
    add(centered_moments(fam.component(range.lo), theta), range.count());
  } else {
    for (int j = range.lo; j <= range.hi; ++j) {
      add(centered_moments(fam.component(j), theta), 1.0);
    }
  }
  if (!(agg.s2 > 0.0)) {
    throw DegenerateVariance("aggregate variance is not positive");
  }
  agg.sigma = std::sqrt(agg.s2);
  return agg;
}

}  // namespace tiltcond
