#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace tiltcond {

enum class Kind { gaussian, gamma, exponential, shifted_exponential };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::gaussian: return "gaussian";
    case Kind::gamma: return "gamma";
    case Kind::exponential: return "exponential";
    case Kind::shifted_exponential: return "shifted_exponential";
  }
  return "?";
}

/// One member X_j of the sequence. Each of the four families carries its
/// cumulant function and derivatives to order 6 in closed form, so nothing
/// downstream ever differentiates numerically, and exponential tilting maps
/// every family back into itself.
class ComponentSpec {
 public:
  static ComponentSpec gaussian(double mean, double sd) {
    if (!(sd > 0.0)) throw ConfigError("gaussian sd must be > 0");
    return ComponentSpec(Kind::gaussian, mean, sd);
  }
  static ComponentSpec gamma(double shape, double rate) {
    if (!(shape > 0.0)) throw ConfigError("gamma shape must be > 0");
    if (!(rate > 0.0)) throw ConfigError("gamma rate must be > 0");
    return ComponentSpec(Kind::gamma, shape, rate);
  }
  static ComponentSpec exponential(double rate) {
    if (!(rate > 0.0)) throw ConfigError("exponential rate must be > 0");
    return ComponentSpec(Kind::exponential, rate, 0.0);
  }
  static ComponentSpec shifted_exponential(double rate, double shift) {
    if (!(rate > 0.0)) throw ConfigError("shifted_exponential rate must be > 0");
    return ComponentSpec(Kind::shifted_exponential, rate, shift);
  }

  Kind kind() const { return kind_; }
  double p1() const { return p1_; }  // mean / shape / rate / rate
  double p2() const { return p2_; }  // sd / rate / -- / shift

  Interval theta_domain() const {
    switch (kind_) {
      case Kind::gaussian: return {-kInf, kInf};
      case Kind::gamma: return {-kInf, p2_};
      case Kind::exponential:
      case Kind::shifted_exponential: return {-kInf, p1_};
    }
    return {};
  }

  Interval support() const {
    switch (kind_) {
      case Kind::gaussian: return {-kInf, kInf};
      case Kind::gamma:
      case Kind::exponential: return {0.0, kInf};
      case Kind::shifted_exponential: return {p2_, kInf};
    }
    return {};
  }

  void require_theta(double theta) const {
    if (!theta_domain().contains_strict(theta)) {
      throw ThetaOutOfDomain("theta=" + std::to_string(theta) + " outside " +
                             to_string(theta_domain()) + " for " + kind_name(kind_));
    }
  }

  /// kappa(theta) = log of the mgf.
  double kappa(double theta) const {
    require_theta(theta);
    switch (kind_) {
      case Kind::gaussian:
        return p1_ * theta + 0.5 * p2_ * p2_ * theta * theta;
      case Kind::gamma:
        return -p1_ * std::log1p(-theta / p2_);
      case Kind::exponential:
        return -std::log1p(-theta / p1_);
      case Kind::shifted_exponential:
        return p2_ * theta - std::log1p(-theta / p1_);
    }
    return 0.0;
  }

  /// order-th derivative of kappa, 1 <= order <= 6. These are the raw
  /// cumulant derivatives; centered moments of order >= 4 differ (see
  /// centered_moments).
  double kappa_derivative(double theta, int order) const {
    if (order < 1 || order > 6) {
      throw UnsupportedOrder("cumulant derivative order must be in 1..6, got " +
                             std::to_string(order));
    }
    require_theta(theta);
    static constexpr double factorial_prev[7] = {0, 1, 1, 2, 6, 24, 120};  // (order-1)!
    switch (kind_) {
      case Kind::gaussian:
        if (order == 1) return p1_ + p2_ * p2_ * theta;
        if (order == 2) return p2_ * p2_;
        return 0.0;
      case Kind::gamma:
        return p1_ * factorial_prev[order] / std::pow(p2_ - theta, order);
      case Kind::exponential:
        return factorial_prev[order] / std::pow(p1_ - theta, order);
      case Kind::shifted_exponential: {
        const double base = factorial_prev[order] / std::pow(p1_ - theta, order);
        return order == 1 ? p2_ + base : base;
      }
    }
    return 0.0;
  }

  double mean(double theta) const { return kappa_derivative(theta, 1); }
  double variance(double theta) const { return kappa_derivative(theta, 2); }

  double density(double x) const {
    const double lp = log_density(x);
    return lp == -kInf ? 0.0 : std::exp(lp);
  }

  double log_density(double x) const {
    switch (kind_) {
      case Kind::gaussian: {
        const double z = (x - p1_) / p2_;
        return log_normal_pdf(z) - std::log(p2_);
      }
      case Kind::gamma:
        if (!(x > 0.0)) return -kInf;
        return p1_ * std::log(p2_) + (p1_ - 1.0) * std::log(x) - p2_ * x - std::lgamma(p1_);
      case Kind::exponential:
        if (!(x > 0.0)) return -kInf;
        return std::log(p1_) - p1_ * x;
      case Kind::shifted_exponential:
        if (!(x > p2_)) return -kInf;
        return std::log(p1_) - p1_ * (x - p2_);
    }
    return -kInf;
  }

  /// d/dx of the density, zero outside the support.
  double density_derivative(double x) const {
    switch (kind_) {
      case Kind::gaussian:
        return -(x - p1_) / (p2_ * p2_) * density(x);
      case Kind::gamma:
        if (!(x > 0.0)) return 0.0;
        return ((p1_ - 1.0) / x - p2_) * density(x);
      case Kind::exponential:
        if (!(x > 0.0)) return 0.0;
        return -p1_ * density(x);
      case Kind::shifted_exponential:
        if (!(x > p2_)) return 0.0;
        return -p1_ * density(x);
    }
    return 0.0;
  }

  /// The theta-tilted component, itself a member of the four families.
  ComponentSpec tilted(double theta) const {
    require_theta(theta);
    switch (kind_) {
      case Kind::gaussian: return gaussian(p1_ + p2_ * p2_ * theta, p2_);
      case Kind::gamma: return gamma(p1_, p2_ - theta);
      case Kind::exponential: return exponential(p1_ - theta);
      case Kind::shifted_exponential: return shifted_exponential(p1_ - theta, p2_);
    }
    return *this;
  }

  double sample(RngStream& rng) const {
    switch (kind_) {
      case Kind::gaussian: {
        std::normal_distribution<double> d(p1_, p2_);
        return d(rng);
      }
      case Kind::gamma: {
        std::gamma_distribution<double> d(p1_, 1.0 / p2_);
        return d(rng);
      }
      case Kind::exponential: {
        std::exponential_distribution<double> d(p1_);
        return d(rng);
      }
      case Kind::shifted_exponential: {
        std::exponential_distribution<double> d(p1_);
        return p2_ + d(rng);
      }
    }
    return 0.0;
  }

  bool operator==(const ComponentSpec&) const = default;

 private:
  ComponentSpec(Kind k, double a, double b) : kind_(k), p1_(a), p2_(b) {}

  Kind kind_;
  double p1_;
  double p2_;
};

/// Centered moments of a component at tilt theta, assembled from the cumulant
/// derivatives. Orders 2 and 3 coincide with the raw derivatives; 4..6 do not.
struct CenteredMoments {
  double m;    // mean
  double s2;   // variance
  double mu3;  // third central moment  (= kappa^(3))
  double mu4;  // fourth central moment (= kappa^(4) + 3 s2^2)
  double mu5;  // fifth central moment  (= kappa^(5) + 10 mu3 s2)
  double mu6;  // sixth central moment
};

inline CenteredMoments centered_moments(const ComponentSpec& c, double theta) {
  const double k1 = c.kappa_derivative(theta, 1);
  const double k2 = c.kappa_derivative(theta, 2);
  const double k3 = c.kappa_derivative(theta, 3);
  const double k4 = c.kappa_derivative(theta, 4);
  const double k5 = c.kappa_derivative(theta, 5);
  const double k6 = c.kappa_derivative(theta, 6);
  CenteredMoments m;
  m.m = k1;
  m.s2 = k2;
  m.mu3 = k3;
  m.mu4 = k4 + 3.0 * k2 * k2;
  m.mu5 = k5 + 10.0 * k3 * k2;
  m.mu6 = k6 + 15.0 * k4 * k2 + 10.0 * k3 * k3 + 15.0 * k2 * k2 * k2;
  return m;
}

/// The independent, non-identically-distributed sequence (X_j), j = 1..n,
/// with a common mgf domain Theta and a common support. Components are held
/// as a finite list; configs may describe long sequences with a repeat rule
/// that is expanded at load time.
class DistributionFamily {
 public:
  DistributionFamily(std::vector<ComponentSpec> components, Interval theta_domain,
                     Interval support)
      : comps_(std::move(components)), theta_(theta_domain), support_(support) {
    if (comps_.empty()) throw ConfigError("family must have at least one component");
    if (!(theta_.lo < theta_.hi)) throw ConfigError("theta_domain must be a non-empty interval");
    if (!(support_.lo < support_.hi)) throw ConfigError("support must be a non-empty interval");
    homogeneous_ = true;
    all_gaussian_ = true;
    for (const auto& c : comps_) {
      if (!(c == comps_.front())) homogeneous_ = false;
      if (c.kind() != Kind::gaussian) all_gaussian_ = false;
    }
  }

  /// n identical copies of one component, domains taken from the component.
  static DistributionFamily iid(const ComponentSpec& c, int n) {
    if (n < 1) throw ConfigError("iid family needs n >= 1");
    return DistributionFamily(std::vector<ComponentSpec>(static_cast<std::size_t>(n), c),
                              c.theta_domain(), c.support());
  }

  int size() const { return static_cast<int>(comps_.size()); }

  const ComponentSpec& component(int j) const {  // 1-based
    if (j < 1 || j > size()) {
      throw IndexOutOfRange("component index " + std::to_string(j) + " outside 1.." +
                            std::to_string(size()));
    }
    return comps_[static_cast<std::size_t>(j - 1)];
  }

  const std::vector<ComponentSpec>& components() const { return comps_; }
  const Interval& theta_domain() const { return theta_; }
  const Interval& support() const { return support_; }
  bool homogeneous() const { return homogeneous_; }
  bool all_gaussian() const { return all_gaussian_; }

  void require_theta(double theta) const {
    if (!theta_.contains_strict(theta)) {
      throw ThetaOutOfDomain("theta=" + std::to_string(theta) + " outside family domain " +
                             to_string(theta_));
    }
  }

  void require_range(const IndexRange& r) const {
    if (r.lo < 1 || r.hi > size() || r.lo > r.hi) {
      throw IndexOutOfRange("range [" + std::to_string(r.lo) + "," + std::to_string(r.hi) +
                            "] invalid for family of size " + std::to_string(size()));
    }
  }

  /// The family perturbed by tilting every component by theta. Tilting shifts
  /// the mgf domain and keeps the support.
  DistributionFamily tilted(double theta) const {
    require_theta(theta);
    std::vector<ComponentSpec> out;
    out.reserve(comps_.size());
    for (const auto& c : comps_) out.push_back(c.tilted(theta));
    return DistributionFamily(out, {theta_.lo - theta, theta_.hi - theta}, support_);
  }

 private:
  std::vector<ComponentSpec> comps_;
  Interval theta_;
  Interval support_;
  bool homogeneous_ = false;
  bool all_gaussian_ = false;
};

inline double kappa(const DistributionFamily& fam, int j, double theta) {
  fam.require_theta(theta);
  return fam.component(j).kappa(theta);
}

/// (m_j, s_j^2, kappa^(3), ..., kappa^(max_order)) at theta.
inline std::vector<double> cumulant_derivatives(const DistributionFamily& fam, int j,
                                                double theta, int max_order) {
  if (max_order < 1 || max_order > 6) {
    throw UnsupportedOrder("max_order must be in 1..6, got " + std::to_string(max_order));
  }
  fam.require_theta(theta);
  const auto& c = fam.component(j);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(max_order));
  for (int o = 1; o <= max_order; ++o) out.push_back(c.kappa_derivative(theta, o));
  return out;
}

inline double density(const DistributionFamily& fam, int j, double x) {
  return fam.component(j).density(x);
}

inline double log_density(const DistributionFamily& fam, int j, double x) {
  return fam.component(j).log_density(x);
}

// ---------------------------------------------------------------------------
// Standing-assumption machine checks
// ---------------------------------------------------------------------------

struct AssumptionCheck {
  bool pass = false;
  std::string detail;
};

/// Pass/fail per standing assumption, evaluated over a theta grid on a
/// compact sub-interval of the mgf domain. The mean envelopes are the
/// pointwise min/max of the component means over the (finite) list.
struct AssumptionReport {
  AssumptionCheck support_common;          // all components share the declared support
  AssumptionCheck mgf_domain_common;       // all mgf domains equal the declared one
  AssumptionCheck mean_monotone;           // each m_j strictly increasing on the grid
  AssumptionCheck mean_envelopes;          // min_j m_j and max_j m_j strictly increasing
  AssumptionCheck variance_bounds;         // inf s_j^2 above floor, sup finite
  AssumptionCheck sixth_moment;            // sup |mu|_j^6 finite
  AssumptionCheck density_derivative_l1;   // sup_j sup_K || d ptilde/dx ||_L1 finite

  double inf_s2 = kInf;
  double sup_s2 = 0.0;
  double sup_abs_mu6 = 0.0;
  double sup_density_deriv_l1 = 0.0;
  std::vector<double> grid_theta;
  std::vector<double> envelope_lo;  // min_j m_j(theta) on the grid
  std::vector<double> envelope_hi;  // max_j m_j(theta) on the grid

  bool all_pass() const {
    return support_common.pass && mgf_domain_common.pass && mean_monotone.pass &&
           mean_envelopes.pass && variance_bounds.pass && sixth_moment.pass &&
           density_derivative_l1.pass;
  }
};

struct ValidationOptions {
  double s2_floor = 1e-6;       // guard for downstream divisions
  double mu6_ceiling = 1e12;    // finiteness certificate threshold
  double deriv_l1_ceiling = 1e12;
};

namespace detail {

inline bool interval_endpoint_equal(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  const double scale = std::max({std::abs(a), std::abs(b), 1.0});
  return std::abs(a - b) <= 1e-12 * scale;
}

inline bool interval_equal(const Interval& a, const Interval& b) {
  return interval_endpoint_equal(a.lo, b.lo) && interval_endpoint_equal(a.hi, b.hi);
}

/// L1 norm of the derivative of the theta-tilted density, by quadrature over
/// an effective window of the support. Only a boundedness certificate is
/// needed, so a loose tolerance is fine.
inline double tilted_density_derivative_l1(const ComponentSpec& c, double theta) {
  const ComponentSpec t = c.tilted(theta);
  const double m = t.mean(0.0);
  const double sd = std::sqrt(t.variance(0.0));
  const Interval sup = t.support();
  const double lo = std::max(sup.lo, m - 14.0 * sd);
  const double hi = std::min(sup.hi, m + 14.0 * sd);
  return integrate_endpoint_singular(
      [&t](double x) { return std::abs(t.density_derivative(x)); }, lo, hi, 1e-7);
}

}  // namespace detail

inline AssumptionReport validate_family(const DistributionFamily& fam, Interval compact,
                                        int grid_size, const ValidationOptions& opt = {}) {
  if (!(std::isfinite(compact.lo) && std::isfinite(compact.hi) && compact.lo < compact.hi)) {
    throw CompactOutsideTheta("compact set must be a finite interval");
  }
  if (!(compact.lo > fam.theta_domain().lo && compact.hi < fam.theta_domain().hi)) {
    throw CompactOutsideTheta("compact set " + to_string(compact) +
                              " not strictly inside theta domain " +
                              to_string(fam.theta_domain()));
  }
  if (grid_size < 3) throw ConfigError("grid_size must be >= 3");

  AssumptionReport rep;
  rep.grid_theta.resize(static_cast<std::size_t>(grid_size));
  const double h = (compact.hi - compact.lo) / (grid_size - 1);
  for (int g = 0; g < grid_size; ++g) rep.grid_theta[static_cast<std::size_t>(g)] = compact.lo + g * h;

  // Domain identities: exact via the closed forms.
  bool supp_ok = true, mgf_ok = true;
  for (const auto& c : fam.components()) {
    if (!detail::interval_equal(c.support(), fam.support())) supp_ok = false;
    if (!detail::interval_equal(c.theta_domain(), fam.theta_domain())) mgf_ok = false;
  }
  rep.support_common = {supp_ok, supp_ok ? "all components share the declared support"
                                         : "component support differs from declaration"};
  rep.mgf_domain_common = {mgf_ok, mgf_ok ? "all mgf domains equal the declared interval"
                                          : "component mgf domain differs from declaration"};

  // Theta may fall outside some component's domain when the mgf check already
  // failed; treat that as a monotonicity/moment failure rather than crash.
  bool monotone_ok = true, grid_evaluable = true;
  std::vector<double> env_lo(rep.grid_theta.size(), kInf);
  std::vector<double> env_hi(rep.grid_theta.size(), -kInf);
  for (const auto& c : fam.components()) {
    double prev_m = -kInf;
    for (std::size_t g = 0; g < rep.grid_theta.size(); ++g) {
      const double th = rep.grid_theta[g];
      if (!c.theta_domain().contains_strict(th)) {
        grid_evaluable = false;
        continue;
      }
      const CenteredMoments mom = centered_moments(c, th);
      if (!(mom.m > prev_m)) monotone_ok = false;
      prev_m = mom.m;
      rep.inf_s2 = std::min(rep.inf_s2, mom.s2);
      rep.sup_s2 = std::max(rep.sup_s2, mom.s2);
      rep.sup_abs_mu6 = std::max(rep.sup_abs_mu6, std::abs(mom.mu6));
      env_lo[g] = std::min(env_lo[g], mom.m);
      env_hi[g] = std::max(env_hi[g], mom.m);
    }
  }
  rep.envelope_lo = env_lo;
  rep.envelope_hi = env_hi;
  monotone_ok = monotone_ok && grid_evaluable;
  rep.mean_monotone = {monotone_ok, monotone_ok ? "every component mean strictly increasing"
                                                : "a component mean failed strict increase"};

  bool env_ok = grid_evaluable;
  for (std::size_t g = 1; g < env_lo.size() && env_ok; ++g) {
    if (!(env_lo[g] > env_lo[g - 1] && env_hi[g] > env_hi[g - 1])) env_ok = false;
  }
  rep.mean_envelopes = {env_ok, env_ok ? "empirical mean envelopes strictly increasing"
                                       : "an empirical mean envelope failed strict increase"};

  const bool var_ok = grid_evaluable && rep.inf_s2 >= opt.s2_floor && rep.sup_s2 < kInf;
  rep.variance_bounds = {var_ok, "inf s^2 = " + std::to_string(rep.inf_s2) +
                                     ", sup s^2 = " + std::to_string(rep.sup_s2) +
                                     ", floor = " + std::to_string(opt.s2_floor)};

  const bool mu6_ok = grid_evaluable && rep.sup_abs_mu6 < opt.mu6_ceiling;
  rep.sixth_moment = {mu6_ok, "sup |mu|^6 = " + std::to_string(rep.sup_abs_mu6)};

  bool cf_ok = grid_evaluable;
  if (cf_ok) {
    try {
      for (const auto& c : fam.components()) {
        for (const double th : rep.grid_theta) {
          const double l1 = detail::tilted_density_derivative_l1(c, th);
          rep.sup_density_deriv_l1 = std::max(rep.sup_density_deriv_l1, l1);
          if (!(l1 < opt.deriv_l1_ceiling)) cf_ok = false;
        }
      }
    } catch (const QuadratureFailure&) {
      cf_ok = false;
    }
  }
  rep.density_derivative_l1 = {cf_ok, "sup ||dp/dx||_L1 = " +
                                          std::to_string(rep.sup_density_deriv_l1)};
  return rep;
}

}  // namespace tiltcond
