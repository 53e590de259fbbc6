#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "distributions.hpp"
#include "edgeworth.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "tilting.hpp"

namespace tiltcond {

enum class Regime { small_k, large_k };

inline std::string regime_name(Regime r) { return r == Regime::small_k ? "small_k" : "large_k"; }

/// Regime selection parameters: prefixes of length k <= n^rho use the product
/// of tilted marginals; prefixes with n - k >= (log10 n)^tau use the
/// corrected sequential kernel.
struct RegimeConfig {
  enum class Mode { small_k, large_k, auto_select };
  Mode mode = Mode::auto_select;
  double rho = 0.3;  // in (0, 1/2)
  double tau = 6.5;  // > 6

  void validate() const {
    if (!(rho > 0.0 && rho < 0.5)) throw ConfigError("rho must be in (0, 1/2)");
    if (!(tau > 6.0)) throw ConfigError("tau must be > 6");
  }
};

struct RegimeDecision {
  Regime regime = Regime::small_k;
  bool in_theory = true;  // false when the chosen regime's size condition fails
};

inline RegimeDecision choose_regime(int n, int k, const RegimeConfig& cfg = {}) {
  cfg.validate();
  if (k < 1 || k > n - 2) {
    throw ConfigError("k must satisfy 1 <= k <= n-2");
  }
  const bool small_ok = k <= std::pow(static_cast<double>(n), cfg.rho);
  const bool large_ok = (n - k) >= std::pow(std::log10(static_cast<double>(n)), cfg.tau);
  switch (cfg.mode) {
    case RegimeConfig::Mode::small_k:
      return {Regime::small_k, small_ok};
    case RegimeConfig::Mode::large_k:
      return {Regime::large_k, large_ok};
    case RegimeConfig::Mode::auto_select:
      if (small_ok != large_ok) {
        return {small_ok ? Regime::small_k : Regime::large_k, true};
      }
      // Both or neither condition holds: fall back on the sqrt(n) switch and
      // flag the result.
      return {k <= std::sqrt(static_cast<double>(n)) ? Regime::small_k : Regime::large_k, false};
  }
  return {};
}

/// State of the sequential construction after i of k coordinates are fixed:
/// the running partial sum and the tilt matching the residual mean
/// (na - partial_sum) / (n - i) over the remaining indices.
struct ConditionalState {
  int n = 0;
  double a = 0.0;
  int k = 0;
  int i = 0;  // 0-based step, 0 <= i <= k-1
  double partial_sum = 0.0;
  TiltSolution tilt;
};

inline double residual_mean(const ConditionalState& s) {
  return (s.n * s.a - s.partial_sum) / (s.n - s.i);
}

inline ConditionalState make_conditional_state(const DistributionFamily& fam, int n, double a,
                                               int k, int i, double partial_sum,
                                               std::optional<double> tilt_hint = {}) {
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  if (k < 1 || k > n - 2) throw ConfigError("k must satisfy 1 <= k <= n-2");
  if (i < 0 || i > k - 1) throw ConfigError("step index i must satisfy 0 <= i <= k-1");
  ConditionalState s;
  s.n = n;
  s.a = a;
  s.k = k;
  s.i = i;
  s.partial_sum = partial_sum;
  const double r = residual_mean(s);
  if (!fam.support().contains_strict(r)) {
    throw ResidualMeanOutOfSupport("residual mean " + std::to_string(r) +
                                   " outside support " + to_string(fam.support()));
  }
  SolveOptions opt;
  opt.hint = tilt_hint;
  s.tilt = solve_mean_tilt(fam, {i + 1, n}, r, opt);
  return s;
}

/// Precomputed pieces of the one-step kernel at a state: the tilted mean of
/// the next component, the tail variance s^2_{i+2,n}, and the linear rate of
/// the skew factor, 3 alpha3_{i+2,n} / sigma_{i+2,n}.
struct KernelFactors {
  double tilt = 0.0;
  double m1 = 0.0;       // m_{i+1}(t_{i,n})
  double tail_s2 = 0.0;  // s^2_{i+2,n}(t_{i,n})
  double skew_rate = 0.0;
};

inline KernelFactors kernel_factors(const DistributionFamily& fam, const ConditionalState& s) {
  if (s.i + 2 > s.n) {
    throw EmptyTailRange("tail range {i+2..n} is empty at i=" + std::to_string(s.i));
  }
  const double t = s.tilt.theta;
  const AggregateMoments tail = aggregate_moments(fam, t, {s.i + 2, s.n});
  KernelFactors f;
  f.tilt = t;
  f.m1 = fam.component(s.i + 1).mean(t);
  f.tail_s2 = tail.s2;
  const double alpha3 = tail.mu3 / (6.0 * tail.s2 * tail.sigma);
  f.skew_rate = 3.0 * alpha3 / tail.sigma;
  return f;
}

inline double log_kernel_unnormalized(const DistributionFamily& fam, const ConditionalState& s,
                                      const KernelFactors& f, double y) {
  const double lp = fam.component(s.i + 1).tilted(f.tilt).log_density(y);
  if (lp == -kInf) return -kInf;
  const double d = y - f.m1;
  return lp - d * d / (2.0 * f.tail_s2) + f.skew_rate * y;
}

inline double kernel_unnormalized(const DistributionFamily& fam, const ConditionalState& s,
                                  double y) {
  const KernelFactors f = kernel_factors(fam, s);
  const double lk = log_kernel_unnormalized(fam, s, f, y);
  return lk == -kInf ? 0.0 : std::exp(lk);
}

enum class NormalizerMethod { automatic, quadrature, closed_form };

namespace detail {

/// For a Gaussian step component the kernel is again Gaussian: the Gaussian
/// correction factor is centered at the tilted mean, so with precision
/// P = 1/sigma^2 + 1/tail_s2 the kernel is
///   N(y; m1, sigma^2) exp(-(y-m1)^2 / (2 tail_s2)) exp(b y)
///   = C N(y; m1 + b/P, 1/P),  C = exp(b m1 + b^2/(2P)) / (sigma sqrt(P)).
struct GaussianKernel {
  double mean;
  double variance;
  double normalizer;
};

inline GaussianKernel gaussian_kernel(const ComponentSpec& comp, const KernelFactors& f) {
  const ComponentSpec tilted = comp.tilted(f.tilt);
  const double sigma2 = tilted.variance(0.0);
  const double precision = 1.0 / sigma2 + 1.0 / f.tail_s2;
  GaussianKernel g;
  g.variance = 1.0 / precision;
  g.mean = f.m1 + f.skew_rate * g.variance;
  g.normalizer = std::exp(f.skew_rate * f.m1 +
                          f.skew_rate * f.skew_rate / (2.0 * precision)) /
                 std::sqrt(sigma2 * precision);
  return g;
}

}  // namespace detail

/// Normalizing constant C_i with int kernel / C_i dy = 1. Gaussian step
/// components use the closed form; everything else integrates the kernel over
/// the tilted component's effective support (mean +- 12 sd, clipped to the
/// support), relative tolerance 1e-10.
inline double kernel_normalizer(const DistributionFamily& fam, const ConditionalState& s,
                                NormalizerMethod method = NormalizerMethod::automatic) {
  const KernelFactors f = kernel_factors(fam, s);
  const ComponentSpec& comp = fam.component(s.i + 1);
  const bool gaussian = comp.kind() == Kind::gaussian;
  if (method == NormalizerMethod::closed_form && !gaussian) {
    throw NotGaussianFamily("closed-form normalizer needs a gaussian step component");
  }
  if (gaussian && method != NormalizerMethod::quadrature) {
    return detail::gaussian_kernel(comp, f).normalizer;
  }
  const ComponentSpec tilted = comp.tilted(f.tilt);
  const double m = tilted.mean(0.0);
  const double sd = std::sqrt(tilted.variance(0.0));
  const Interval sup = fam.support();
  const double lo = std::max(sup.lo, m - 12.0 * sd);
  const double hi = std::min(sup.hi, m + 12.0 * sd);
  return integrate(
      [&](double y) {
        const double lk = log_kernel_unnormalized(fam, s, f, y);
        return lk == -kInf ? 0.0 : std::exp(lk);
      },
      lo, hi, 1e-10);
}

// ---------------------------------------------------------------------------
// Grid-based inverse-CDF sampler for one kernel step
// ---------------------------------------------------------------------------

struct GridSamplerConfig {
  int initial_points = 1 << 12;
  int max_points = 1 << 18;
  double width_sds = 12.0;      // effective support half-width in tilted sds
  double tail_rel = 1e-12;      // edge density relative to the mode
  double richardson_tol = 1e-9; // relative mass change under grid doubling
};

namespace detail {

/// Tabulated kernel with a trapezoid CDF. Doubles resolution until the mass
/// estimate is stable and widens until the edges carry negligible density.
class KernelGridSampler {
 public:
  KernelGridSampler(const DistributionFamily& fam, const ConditionalState& s,
                    const KernelFactors& f, const GridSamplerConfig& cfg) {
    const ComponentSpec tilted = fam.component(s.i + 1).tilted(f.tilt);
    const double m = tilted.mean(0.0);
    const double sd = std::sqrt(tilted.variance(0.0));
    const Interval sup = fam.support();
    double half_width = cfg.width_sds * sd;
    int points = cfg.initial_points;
    for (int attempt = 0; attempt < 40; ++attempt) {
      lo_ = std::max(sup.lo, m - half_width);
      hi_ = std::min(sup.hi, m + half_width);
      build(fam, s, f, points);
      const bool lo_open = lo_ > sup.lo;  // only interior edges need decay
      const bool hi_open = hi_ < sup.hi;
      const double vmax = *std::max_element(values_.begin(), values_.end());
      if (!(vmax > 0.0) || !(mass_ > 1e-300)) {
        throw GridUnderflow("kernel mass underflow over the proposed grid");
      }
      const bool tails_ok = (!lo_open || values_.front() <= cfg.tail_rel * vmax) &&
                            (!hi_open || values_.back() <= cfg.tail_rel * vmax);
      if (!tails_ok) {
        half_width *= 1.5;
        continue;
      }
      if (points < cfg.max_points) {
        const double coarse = coarse_mass();
        if (std::abs(mass_ - coarse) > cfg.richardson_tol * mass_) {
          points *= 2;
          continue;
        }
      }
      return;
    }
    throw QuadratureFailure("kernel grid failed to stabilize");
  }

  double sample(RngStream& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double target = unif(rng) * mass_;
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), target);
    std::size_t cell = it == cdf_.begin() ? 0 : static_cast<std::size_t>(it - cdf_.begin() - 1);
    cell = std::min(cell, values_.size() - 2);
    const double d = target - cdf_[cell];
    const double v0 = values_[cell], v1 = values_[cell + 1];
    const double slope = (v1 - v0) / h_;
    double t;
    if (std::abs(slope) < 1e-300) {
      t = v0 > 0.0 ? d / v0 : 0.5 * h_;
    } else {
      const double disc = std::max(0.0, v0 * v0 + 2.0 * slope * d);
      t = (std::sqrt(disc) - v0) / slope;
    }
    t = std::clamp(t, 0.0, h_);
    return lo_ + cell * h_ + t;
  }

  double mass() const { return mass_; }

 private:
  void build(const DistributionFamily& fam, const ConditionalState& s, const KernelFactors& f,
             int points) {
    values_.assign(static_cast<std::size_t>(points), 0.0);
    h_ = (hi_ - lo_) / (points - 1);
    std::vector<double> logs(values_.size());
    double max_log = -kInf;
    for (std::size_t g = 0; g < values_.size(); ++g) {
      logs[g] = log_kernel_unnormalized(fam, s, f, lo_ + g * h_);
      max_log = std::max(max_log, logs[g]);
    }
    if (max_log == -kInf) throw GridUnderflow("kernel vanishes over the proposed grid");
    shift_ = max_log;
    for (std::size_t g = 0; g < values_.size(); ++g) {
      values_[g] = logs[g] == -kInf ? 0.0 : std::exp(logs[g] - shift_);
    }
    cdf_.assign(values_.size(), 0.0);
    for (std::size_t g = 1; g < values_.size(); ++g) {
      cdf_[g] = cdf_[g - 1] + 0.5 * (values_[g - 1] + values_[g]) * h_;
    }
    mass_ = cdf_.back();
  }

  double coarse_mass() const {
    double m = 0.0;
    for (std::size_t g = 2; g < values_.size(); g += 2) {
      m += 0.5 * (values_[g - 2] + values_[g]) * 2.0 * h_;
    }
    return m;
  }

  double lo_ = 0.0, hi_ = 0.0, h_ = 0.0, mass_ = 0.0, shift_ = 0.0;
  std::vector<double> values_;
  std::vector<double> cdf_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// G_k: evaluation and sampling
// ---------------------------------------------------------------------------

/// Per-step records from a sampled path: the log conditional kernel densities
/// (log kernel - log C_i) at the sampled coordinates and the solved tilts.
struct GkPathDiagnostics {
  std::vector<double> step_log_density;
  std::vector<double> tilts;
};

/// The approximating law G_k of the first k coordinates given S_{1,n} = na.
/// small_k: product of the theta_n^a-tilted marginals. large_k: sequential
/// kernel with a fresh tilt t_{i,n} solved from the running partial sum at
/// every step.
class GkLaw {
 public:
  GkLaw(const DistributionFamily& fam, int n, double a, int k, RegimeDecision decision,
        GridSamplerConfig grid = {})
      : fam_(&fam), n_(n), a_(a), k_(k), decision_(decision), grid_(grid) {
    if (n != fam.size()) throw ConfigError("n must equal the family size");
    if (k < 1 || k > n - 2) throw ConfigError("k must satisfy 1 <= k <= n-2");
    theta_na_ = solve_mean_tilt(fam, {1, n}, a).theta;
    if (decision_.regime == Regime::small_k) {
      tilted_prefix_.reserve(static_cast<std::size_t>(k));
      for (int j = 1; j <= k; ++j) {
        tilted_prefix_.push_back(fam.component(j).tilted(theta_na_));
      }
    }
  }

  const RegimeDecision& decision() const { return decision_; }
  double theta_na() const { return theta_na_; }
  int n() const { return n_; }
  int k() const { return k_; }
  double a() const { return a_; }

  double log_density(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != k_) throw ConfigError("point dimension must equal k");
    if (decision_.regime == Regime::small_k) {
      double acc = 0.0;
      for (int j = 0; j < k_; ++j) {
        const double lp = tilted_prefix_[static_cast<std::size_t>(j)].log_density(y[j]);
        if (lp == -kInf) {
          throw ResidualMeanOutOfSupport("coordinate outside the support");
        }
        acc += lp;
      }
      return acc;
    }
    double acc = 0.0;
    double partial = 0.0;
    double hint = theta_na_;
    for (int i = 0; i < k_; ++i) {
      const ConditionalState s = make_conditional_state(*fam_, n_, a_, k_, i, partial, hint);
      const KernelFactors f = kernel_factors(*fam_, s);
      const double lk = log_kernel_unnormalized(*fam_, s, f, y[i]);
      if (lk == -kInf) {
        throw ResidualMeanOutOfSupport("coordinate outside the support");
      }
      acc += lk - std::log(normalizer(s, f));
      partial += y[i];
      hint = s.tilt.theta;
    }
    return acc;
  }

  std::vector<double> sample(RngStream& rng, GkPathDiagnostics* diag = nullptr) const {
    std::vector<double> y(static_cast<std::size_t>(k_));
    if (diag) {
      diag->step_log_density.assign(static_cast<std::size_t>(k_), 0.0);
      diag->tilts.assign(static_cast<std::size_t>(k_), 0.0);
    }
    if (decision_.regime == Regime::small_k) {
      for (int j = 0; j < k_; ++j) {
        y[static_cast<std::size_t>(j)] = tilted_prefix_[static_cast<std::size_t>(j)].sample(rng);
        if (diag) {
          diag->step_log_density[static_cast<std::size_t>(j)] =
              tilted_prefix_[static_cast<std::size_t>(j)].log_density(y[static_cast<std::size_t>(j)]);
          diag->tilts[static_cast<std::size_t>(j)] = theta_na_;
        }
      }
      return y;
    }
    double partial = 0.0;
    double hint = theta_na_;
    for (int i = 0; i < k_; ++i) {
      const ConditionalState s = make_conditional_state(*fam_, n_, a_, k_, i, partial, hint);
      const KernelFactors f = kernel_factors(*fam_, s);
      const ComponentSpec& comp = fam_->component(i + 1);
      double yi;
      if (comp.kind() == Kind::gaussian) {
        const detail::GaussianKernel g = detail::gaussian_kernel(comp, f);
        std::normal_distribution<double> d(g.mean, std::sqrt(g.variance));
        yi = d(rng);
      } else {
        detail::KernelGridSampler sampler(*fam_, s, f, grid_);
        yi = sampler.sample(rng);
      }
      y[static_cast<std::size_t>(i)] = yi;
      if (diag) {
        diag->step_log_density[static_cast<std::size_t>(i)] =
            log_kernel_unnormalized(*fam_, s, f, yi) - std::log(normalizer(s, f));
        diag->tilts[static_cast<std::size_t>(i)] = s.tilt.theta;
      }
      partial += yi;
      hint = s.tilt.theta;
    }
    return y;
  }

 private:
  double normalizer(const ConditionalState& s, const KernelFactors& f) const {
    const ComponentSpec& comp = fam_->component(s.i + 1);
    if (comp.kind() == Kind::gaussian) {
      return detail::gaussian_kernel(comp, f).normalizer;
    }
    const ComponentSpec tilted = comp.tilted(f.tilt);
    const double m = tilted.mean(0.0);
    const double sd = std::sqrt(tilted.variance(0.0));
    const Interval sup = fam_->support();
    return integrate(
        [&](double y) {
          const double lk = log_kernel_unnormalized(*fam_, s, f, y);
          return lk == -kInf ? 0.0 : std::exp(lk);
        },
        std::max(sup.lo, m - 12.0 * sd), std::min(sup.hi, m + 12.0 * sd), 1e-10);
  }

  const DistributionFamily* fam_;
  int n_;
  double a_;
  int k_;
  RegimeDecision decision_;
  GridSamplerConfig grid_;
  double theta_na_ = 0.0;
  std::vector<ComponentSpec> tilted_prefix_;  // small_k only
};

inline double g_k_log_density(const DistributionFamily& fam, int n, double a, int k,
                              std::span<const double> y, RegimeDecision decision) {
  return GkLaw(fam, n, a, k, decision).log_density(y);
}

inline std::vector<double> sample_g_k(const DistributionFamily& fam, int n, double a, int k,
                                      RegimeDecision decision, RngStream& rng,
                                      GkPathDiagnostics* diag = nullptr) {
  return GkLaw(fam, n, a, k, decision).sample(rng, diag);
}

}  // namespace tiltcond
