#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "distributions.hpp"
#include "rng.hpp"
#include "tilting.hpp"

namespace tiltcond {

/// A density tabulated on a uniform grid. Carrier for the sum densities
/// p_{S_{p,q}} that feed the exact conditional density.
struct GridDensity {
  double origin = 0.0;
  double spacing = 1.0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double x_at(std::size_t i) const { return origin + static_cast<double>(i) * spacing; }
  double x_end() const { return values.empty() ? origin : x_at(values.size() - 1); }

  double mass() const {
    if (values.size() < 2) return 0.0;
    double s = 0.0;
    for (const double v : values) s += v;
    s -= 0.5 * (values.front() + values.back());
    return s * spacing;
  }

  void renormalize() {
    const double m = mass();
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw GridUnderflow("grid density mass is not positive");
    }
    for (double& v : values) v /= m;
  }

  /// Linear interpolation; zero outside the grid.
  double value_at(double x) const {
    const double pos = (x - origin) / spacing;
    if (!(pos >= 0.0) || pos > static_cast<double>(values.size() - 1)) return 0.0;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= values.size()) return values.back();
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * values[i] + f * values[i + 1];
  }

  /// Log density, interpolating linearly on the log scale where both cell
  /// endpoints are positive (sum densities are near-log-concave, so this
  /// limits relative error in the tails).
  double log_value_at(double x) const {
    const double pos = (x - origin) / spacing;
    if (!(pos >= 0.0) || pos > static_cast<double>(values.size() - 1)) return -kInf;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= values.size()) {
      return values.back() > 0.0 ? std::log(values.back()) : -kInf;
    }
    const double f = pos - static_cast<double>(i);
    const double v0 = values[i], v1 = values[i + 1];
    if (v0 > 0.0 && v1 > 0.0) {
      return (1.0 - f) * std::log(v0) + f * std::log(v1);
    }
    const double lin = (1.0 - f) * v0 + f * v1;
    return lin > 0.0 ? std::log(lin) : -kInf;
  }
};

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t points = 1 << 14;
};

namespace detail {

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

/// Full linear convolution via FFTW r2c/c2r with power-of-two padding.
inline std::vector<double> fft_convolve(const std::vector<double>& a,
                                        const std::vector<double>& b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  std::vector<double> fa(n, 0.0), fb(n, 0.0), out(n, 0.0);
  std::copy(a.begin(), a.end(), fa.begin());
  std::copy(b.begin(), b.end(), fb.begin());
  const std::size_t nc = n / 2 + 1;
  std::vector<std::complex<double>> ca(nc), cb(nc);

  fftw_plan pa, pb, pinv;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    pa = fftw_plan_dft_r2c_1d(static_cast<int>(n), fa.data(),
                              reinterpret_cast<fftw_complex*>(ca.data()), FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_1d(static_cast<int>(n), fb.data(),
                              reinterpret_cast<fftw_complex*>(cb.data()), FFTW_ESTIMATE);
    pinv = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                reinterpret_cast<fftw_complex*>(ca.data()), out.data(),
                                FFTW_ESTIMATE);
  }
  fftw_execute(pa);
  fftw_execute(pb);
  for (std::size_t i = 0; i < nc; ++i) ca[i] *= cb[i];
  fftw_execute(pinv);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(pinv);
  }
  out.resize(out_len);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv_n;
  return out;
}

/// Drop negligible tails so repeated convolutions keep bounded length. The
/// threshold keeps roughly +-13.6 aggregate sds of a Gaussian-like density.
inline void crop_grid(GridDensity& g, double rel_threshold = 1e-40) {
  if (g.values.empty()) return;
  const double vmax = *std::max_element(g.values.begin(), g.values.end());
  if (!(vmax > 0.0)) throw GridUnderflow("grid density vanished");
  const double cut = rel_threshold * vmax;
  std::size_t first = 0, last = g.values.size() - 1;
  while (first < last && g.values[first] < cut) ++first;
  while (last > first && g.values[last] < cut) --last;
  if (first > 0 || last + 1 < g.values.size()) {
    std::vector<double> kept(g.values.begin() + static_cast<std::ptrdiff_t>(first),
                             g.values.begin() + static_cast<std::ptrdiff_t>(last + 1));
    g.origin += static_cast<double>(first) * g.spacing;
    g.values = std::move(kept);
  }
}

inline GridDensity convolve_densities(const GridDensity& a, const GridDensity& b) {
  GridDensity g;
  g.origin = a.origin + b.origin;
  g.spacing = a.spacing;
  g.values = fft_convolve(a.values, b.values);
  for (double& v : g.values) {
    v *= a.spacing;
    if (v < 0.0) v = 0.0;  // FFT ringing
  }
  crop_grid(g);
  g.renormalize();
  return g;
}

/// Density value for grid nodes. At a finite support edge the right limit is
/// used, so the trapezoid rule sees the jump of exponential-type densities.
inline double grid_pdf(const ComponentSpec& c, double x) {
  const Interval sup = c.support();
  if (std::isfinite(sup.lo) && x <= sup.lo) {
    if (x < sup.lo) return 0.0;
    switch (c.kind()) {
      case Kind::exponential: return c.p1();
      case Kind::shifted_exponential: return c.p1();
      case Kind::gamma: return c.p1() == 1.0 ? c.p2() : 0.0;
      default: break;
    }
  }
  return c.density(x);
}

inline GridDensity grid_component(const ComponentSpec& c, double h) {
  const double m = c.mean(0.0);
  const double sd = std::sqrt(c.variance(0.0));
  const Interval sup = c.support();
  const double lo = std::max(sup.lo, m - 14.0 * sd);
  const double hi = std::min(sup.hi, m + 14.0 * sd);
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h)) + 1;
  GridDensity g;
  g.origin = lo;
  g.spacing = h;
  g.values.resize(std::max<std::size_t>(n, 2));
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = grid_pdf(c, g.x_at(i));
  g.renormalize();
  return g;
}

inline GridDensity convolve_range(const DistributionFamily& fam, IndexRange range, double h) {
  if (fam.homogeneous()) {
    // iid ranges: log-time repeated squaring of convolution powers
    const GridDensity base = grid_component(fam.component(range.lo), h);
    GridDensity acc;
    bool acc_set = false;
    GridDensity pw = base;
    int e = range.count();
    while (e > 0) {
      if (e & 1) {
        acc = acc_set ? convolve_densities(acc, pw) : pw;
        acc_set = true;
      }
      e >>= 1;
      if (e > 0) pw = convolve_densities(pw, pw);
    }
    return acc;
  }
  GridDensity acc = grid_component(fam.component(range.lo), h);
  for (int j = range.lo + 1; j <= range.hi; ++j) {
    acc = convolve_densities(acc, grid_component(fam.component(j), h));
  }
  return acc;
}

inline double sup_probe_diff(const GridDensity& a, const GridDensity& b) {
  const double lo = std::max(a.origin, b.origin);
  const double hi = std::min(a.x_end(), b.x_end());
  if (!(hi > lo)) return kInf;
  double sup = 0.0;
  const int probes = 2048;
  for (int i = 0; i <= probes; ++i) {
    const double x = lo + (hi - lo) * i / probes;
    sup = std::max(sup, std::abs(a.value_at(x) - b.value_at(x)));
  }
  return sup;
}

}  // namespace detail

/// Density of S_{p,q} = sum of the components over the range, by iterated FFT
/// convolution of gridded component densities. Resolution is validated by a
/// spacing-halving comparison; with an explicit GridSpec a failed comparison
/// throws GridTooCoarse, otherwise the grid refines itself up to a cap.
inline GridDensity grid_sum_density(const DistributionFamily& fam, IndexRange range,
                                    std::optional<GridSpec> spec = {},
                                    double* discretization_error = nullptr) {
  fam.require_range(range);
  double mean = 0.0, var = 0.0;
  for (int j = range.lo; j <= range.hi; ++j) {
    mean += fam.component(j).mean(0.0);
    var += fam.component(j).variance(0.0);
  }
  double sup_lo = 0.0, sup_hi = 0.0;
  for (int j = range.lo; j <= range.hi; ++j) {
    sup_lo += fam.component(j).support().lo;  // -inf propagates
    sup_hi += fam.component(j).support().hi;
  }
  double lo, hi;
  std::size_t points;
  if (spec) {
    lo = spec->lo;
    hi = spec->hi;
    points = spec->points;
    if (!(hi > lo) || points < 16) throw ConfigError("invalid grid spec");
  } else {
    lo = std::max(sup_lo, mean - 12.0 * std::sqrt(var));
    hi = std::min(sup_hi, mean + 12.0 * std::sqrt(var));
    points = 1 << 14;
  }
  const int max_rounds = spec ? 1 : 6;
  double h = (hi - lo) / static_cast<double>(points - 1);
  GridDensity coarse = detail::convolve_range(fam, range, h);
  for (int round = 0; round < max_rounds; ++round) {
    GridDensity fine = detail::convolve_range(fam, range, 0.5 * h);
    const double err = detail::sup_probe_diff(coarse, fine);
    if (discretization_error) *discretization_error = err;
    if (err <= 1e-6) return fine;
    coarse = std::move(fine);
    h *= 0.5;
    if (static_cast<double>(points) * std::pow(2.0, round + 1) > static_cast<double>(1 << 20)) {
      break;
    }
  }
  throw GridTooCoarse("sum-density grid did not reach the 1e-6 discretization target");
}

// ---------------------------------------------------------------------------
// Exact conditional density of the first k coordinates given S_{1,n} = na
// ---------------------------------------------------------------------------

/// Ground-truth conditional density
///   [prod_{j<=k} p_j(y_j)] p_{S_{k+1,n}}(na - sum y) / p_{S_{1,n}}(na)
/// with both sum densities tabulated once at construction.
class ConditionalOracle {
 public:
  ConditionalOracle(const DistributionFamily& fam, int n, double a, int k,
                    std::optional<GridSpec> tail_spec = {},
                    std::optional<GridSpec> full_spec = {})
      : fam_(&fam), n_(n), k_(k), na_(static_cast<double>(n) * a) {
    if (n != fam.size()) throw ConfigError("n must equal the family size");
    if (k < 1 || k > n - 1) throw ConfigError("k must satisfy 1 <= k <= n-1");
    tail_ = grid_sum_density(fam, {k + 1, n}, tail_spec);
    const GridDensity full = grid_sum_density(fam, {1, n}, full_spec);
    const double denom = full.value_at(na_);
    if (!(denom > 0.0) || !std::isfinite(denom)) {
      throw ZeroDenominator("p_{S_{1,n}}(na) vanishes at the conditioning point");
    }
    log_denom_ = std::log(denom);
  }

  double log_density(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != k_) throw ConfigError("point dimension must equal k");
    double acc = -log_denom_;
    double sum = 0.0;
    for (int j = 0; j < k_; ++j) {
      const double lp = fam_->component(j + 1).log_density(y[j]);
      if (lp == -kInf) return -kInf;
      acc += lp;
      sum += y[j];
    }
    const double lt = tail_.log_value_at(na_ - sum);
    return lt == -kInf ? -kInf : acc + lt;
  }

  double density(std::span<const double> y) const {
    const double l = log_density(y);
    return l == -kInf ? 0.0 : std::exp(l);
  }

  const GridDensity& tail_grid() const { return tail_; }

 private:
  const DistributionFamily* fam_;
  int n_, k_;
  double na_;
  GridDensity tail_;
  double log_denom_ = 0.0;
};

inline double exact_conditional_density(const DistributionFamily& fam, int n, double a, int k,
                                        std::span<const double> y,
                                        std::optional<GridSpec> tail_spec = {},
                                        std::optional<GridSpec> full_spec = {}) {
  return ConditionalOracle(fam, n, a, k, tail_spec, full_spec).density(y);
}

// ---------------------------------------------------------------------------
// Closed-form oracle for all-Gaussian families
// ---------------------------------------------------------------------------

struct GaussianConditional {
  std::vector<double> mean;               // length k
  std::vector<std::vector<double>> cov;   // k x k
};

namespace detail {

inline void require_all_gaussian(const DistributionFamily& fam) {
  if (!fam.all_gaussian()) {
    throw NotGaussianFamily("operation requires an all-gaussian family");
  }
}

}  // namespace detail

/// Exact conditional mean and covariance of (Y_1..Y_k) given S_{1,n} = na:
/// mean_j = mu_j + sigma_j^2 (na - sum mu) / sum sigma^2,
/// cov_ij = delta_ij sigma_i^2 - sigma_i^2 sigma_j^2 / sum sigma^2.
inline GaussianConditional gaussian_conditional_params(const DistributionFamily& fam, int n,
                                                       double a, int k) {
  detail::require_all_gaussian(fam);
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  if (k < 1 || k > n - 1) throw ConfigError("k must satisfy 1 <= k <= n-1");
  double mu_sum = 0.0, s2_sum = 0.0;
  for (int j = 1; j <= n; ++j) {
    mu_sum += fam.component(j).mean(0.0);
    s2_sum += fam.component(j).variance(0.0);
  }
  const double shift = (static_cast<double>(n) * a - mu_sum) / s2_sum;
  GaussianConditional out;
  out.mean.resize(static_cast<std::size_t>(k));
  out.cov.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i) {
    const double s2i = fam.component(i + 1).variance(0.0);
    out.mean[static_cast<std::size_t>(i)] = fam.component(i + 1).mean(0.0) + s2i * shift;
    for (int j = 0; j < k; ++j) {
      const double s2j = fam.component(j + 1).variance(0.0);
      double c = -s2i * s2j / s2_sum;
      if (i == j) c += s2i;
      out.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = c;
    }
  }
  return out;
}

/// O(k) log-density of the Gaussian conditional law via the rank-one
/// structure of the covariance: with D = diag(sigma_j^2), j <= k, and
/// s_tail = sum_{j>k} sigma_j^2,
///   Sigma^{-1} = D^{-1} + 1 1^T / s_tail,
///   det Sigma  = (prod sigma_j^2) s_tail / s_all.
inline double gaussian_conditional_log_density(const DistributionFamily& fam, int n, double a,
                                               int k, std::span<const double> y) {
  detail::require_all_gaussian(fam);
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  if (k < 1 || k > n - 1) throw ConfigError("k must satisfy 1 <= k <= n-1");
  if (static_cast<int>(y.size()) != k) throw ConfigError("point dimension must equal k");
  double mu_sum = 0.0, s2_all = 0.0;
  for (int j = 1; j <= n; ++j) {
    mu_sum += fam.component(j).mean(0.0);
    s2_all += fam.component(j).variance(0.0);
  }
  double s2_head = 0.0;
  for (int j = 1; j <= k; ++j) s2_head += fam.component(j).variance(0.0);
  const double s2_tail = s2_all - s2_head;
  const double shift = (static_cast<double>(n) * a - mu_sum) / s2_all;

  double quad = 0.0, logdet = std::log(s2_tail / s2_all), zsum = 0.0;
  for (int j = 0; j < k; ++j) {
    const double s2 = fam.component(j + 1).variance(0.0);
    const double z = y[j] - (fam.component(j + 1).mean(0.0) + s2 * shift);
    quad += z * z / s2;
    zsum += z;
    logdet += std::log(s2);
  }
  quad += zsum * zsum / s2_tail;
  return -0.5 * (k * std::log(2.0 * M_PI) + logdet + quad);
}

/// Exact draw of all n coordinates given S_{1,n} = na: independent draws
/// projected onto the constraint, y_j = x_j + sigma_j^2 (na - sum x)/sum s^2.
inline void gaussian_conditional_sample(const DistributionFamily& fam, int n, double a,
                                        RngStream& rng, std::span<double> out) {
  detail::require_all_gaussian(fam);
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  if (static_cast<int>(out.size()) != n) throw ConfigError("output must have length n");
  double s2_all = 0.0, sum = 0.0;
  for (int j = 1; j <= n; ++j) {
    const ComponentSpec& c = fam.component(j);
    std::normal_distribution<double> d(c.mean(0.0), std::sqrt(c.variance(0.0)));
    out[static_cast<std::size_t>(j - 1)] = d(rng);
    sum += out[static_cast<std::size_t>(j - 1)];
    s2_all += c.variance(0.0);
  }
  const double c0 = (static_cast<double>(n) * a - sum) / s2_all;
  for (int j = 1; j <= n; ++j) {
    out[static_cast<std::size_t>(j - 1)] += fam.component(j).variance(0.0) * c0;
  }
}

// ---------------------------------------------------------------------------
// Total-variation distance estimation
// ---------------------------------------------------------------------------

enum class TvMethod { grid, monte_carlo };

inline std::string tv_method_name(TvMethod m) {
  return m == TvMethod::grid ? "grid" : "monte_carlo";
}

struct TvEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  TvMethod method = TvMethod::monte_carlo;
};

/// TV(P, G) = 1/2 E_G |p/g - 1| estimated from draws of the approximation.
template <class LogTrue, class LogApprox, class Sampler>
TvEstimate tv_monte_carlo(LogTrue&& log_true, LogApprox&& log_approx, Sampler&& sampler,
                          std::int64_t n_samples, RngStream& rng) {
  if (n_samples < 2) throw ConfigError("tv_monte_carlo needs at least 2 samples");
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const auto y = sampler(rng);
    const double lt = log_true(y);
    const double la = log_approx(y);
    if (!std::isfinite(lt) || !std::isfinite(la)) {
      throw NonFiniteLogDensity("log density not finite at a sampled point");
    }
    const double w = std::abs(std::expm1(lt - la));
    sum += w;
    sumsq += w * w;
  }
  const double mean = sum / static_cast<double>(n_samples);
  const double var =
      std::max(0.0, (sumsq - static_cast<double>(n_samples) * mean * mean) /
                        static_cast<double>(n_samples - 1));
  TvEstimate est;
  est.estimate = std::clamp(0.5 * mean, 0.0, 1.0);
  est.std_error = 0.5 * std::sqrt(var / static_cast<double>(n_samples));
  est.n_samples = n_samples;
  est.method = TvMethod::monte_carlo;
  return est;
}

/// Deterministic 1/2 int |p - g| over [lo, hi]; std_error reports the change
/// under grid halving (a discretization-error proxy).
template <class PdfTrue, class PdfApprox>
TvEstimate tv_grid_1d(PdfTrue&& p, PdfApprox&& g, double lo, double hi,
                      std::size_t points = 1 << 14) {
  const auto riemann = [&](std::size_t m) {
    const double h = (hi - lo) / static_cast<double>(m - 1);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = lo + static_cast<double>(i) * h;
      const double d = std::abs(p(x) - g(x));
      s += (i == 0 || i + 1 == m) ? 0.5 * d : d;
    }
    return 0.5 * s * h;
  };
  const double coarse = riemann(points);
  const double fine = riemann(2 * points - 1);
  TvEstimate est;
  est.estimate = std::clamp(fine, 0.0, 1.0);
  est.std_error = std::abs(fine - coarse);
  est.n_samples = static_cast<std::int64_t>(2 * points - 1);
  est.method = TvMethod::grid;
  return est;
}

template <class PdfTrue, class PdfApprox>
TvEstimate tv_grid_2d(PdfTrue&& p, PdfApprox&& g, Interval bx, Interval by,
                      std::size_t points_per_dim = 1 << 10) {
  const auto riemann = [&](std::size_t m) {
    const double hx = (bx.hi - bx.lo) / static_cast<double>(m - 1);
    const double hy = (by.hi - by.lo) / static_cast<double>(m - 1);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double wx = (i == 0 || i + 1 == m) ? 0.5 : 1.0;
      const double x = bx.lo + static_cast<double>(i) * hx;
      for (std::size_t j = 0; j < m; ++j) {
        const double wy = (j == 0 || j + 1 == m) ? 0.5 : 1.0;
        const double y = by.lo + static_cast<double>(j) * hy;
        s += wx * wy * std::abs(p(x, y) - g(x, y));
      }
    }
    return 0.5 * s * hx * hy;
  };
  const double coarse = riemann(points_per_dim);
  const double fine = riemann(2 * points_per_dim - 1);
  TvEstimate est;
  est.estimate = std::clamp(fine, 0.0, 1.0);
  est.std_error = std::abs(fine - coarse);
  est.n_samples = static_cast<std::int64_t>((2 * points_per_dim - 1) * (2 * points_per_dim - 1));
  est.method = TvMethod::grid;
  return est;
}

}  // namespace tiltcond
