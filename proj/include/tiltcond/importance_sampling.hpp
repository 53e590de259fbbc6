#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "common.hpp"
#include "conditional_law.hpp"
#include "distributions.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tilting.hpp"

namespace tiltcond {

struct ISReport {
  double estimate = 0.0;
  double variance_of_weights = 0.0;
  double relative_std_error = 0.0;
  std::int64_t n_samples = 0;
  std::int64_t hit_count = 0;
  double max_weight = 0.0;
};

/// The proposal on R^n built from G_k: the first k coordinates follow the
/// sequential (or product) approximation of the conditional law, the
/// remaining n-k are drawn independently from components tilted so the tail
/// mean matches the residual budget (na - sum of the prefix) / (n - k).
/// k = 0 degenerates to the product of theta_n^a-tilted components.
class GbarProposal {
 public:
  GbarProposal(const DistributionFamily& fam, int n, double a, int k, RegimeDecision decision,
               GridSamplerConfig grid = {})
      : fam_(&fam), n_(n), a_(a), k_(k) {
    if (n != fam.size()) throw ConfigError("n must equal the family size");
    if (k < 0 || k > n - 2) throw ConfigError("k must satisfy 0 <= k <= n-2");
    if (k_ >= 1) prefix_.emplace(fam, n, a, k, decision, grid);
  }

  int n() const { return n_; }
  int k() const { return k_; }

  /// Draws y_1..y_n into out and returns log gbar(out).
  double sample_path(RngStream& rng, std::span<double> out) const {
    if (static_cast<int>(out.size()) != n_) throw ConfigError("output must have length n");
    double logq = 0.0;
    double prefix_sum = 0.0;
    if (prefix_) {
      GkPathDiagnostics diag;
      const std::vector<double> y = prefix_->sample(rng, &diag);
      for (int j = 0; j < k_; ++j) {
        out[static_cast<std::size_t>(j)] = y[static_cast<std::size_t>(j)];
        prefix_sum += y[static_cast<std::size_t>(j)];
        logq += diag.step_log_density[static_cast<std::size_t>(j)];
      }
    }
    const double tilt = tail_tilt(prefix_sum);
    for (int j = k_ + 1; j <= n_; ++j) {
      const ComponentSpec tilted = fam_->component(j).tilted(tilt);
      const double x = tilted.sample(rng);
      out[static_cast<std::size_t>(j - 1)] = x;
      logq += tilted.log_density(x);
    }
    return logq;
  }

  double log_density(std::span<const double> y) const {
    if (static_cast<int>(y.size()) != n_) throw ConfigError("point dimension must equal n");
    double logq = 0.0;
    double prefix_sum = 0.0;
    if (prefix_) {
      logq += prefix_->log_density(y.subspan(0, static_cast<std::size_t>(k_)));
      for (int j = 0; j < k_; ++j) prefix_sum += y[static_cast<std::size_t>(j)];
    }
    const double tilt = tail_tilt(prefix_sum);
    for (int j = k_ + 1; j <= n_; ++j) {
      const double lp = fam_->component(j).tilted(tilt).log_density(y[static_cast<std::size_t>(j - 1)]);
      if (lp == -kInf) throw NonFiniteLogDensity("tail coordinate outside the support");
      logq += lp;
    }
    return logq;
  }

 private:
  /// Tilt of the tail stage given the realized prefix: keeps the remaining
  /// coordinates mean-consistent with the leftover budget.
  double tail_tilt(double prefix_sum) const {
    const double r = (static_cast<double>(n_) * a_ - prefix_sum) / (n_ - k_);
    if (!fam_->support().contains_strict(r)) {
      throw ResidualMeanOutOfSupport("tail residual mean outside the support");
    }
    return solve_mean_tilt(*fam_, {k_ + 1, n_}, r).theta;
  }

  const DistributionFamily* fam_;
  int n_;
  double a_;
  int k_;
  std::optional<GkLaw> prefix_;
};

/// The raw product density of the family itself; useful as the identity
/// proposal (all weights are one on the event).
class RawFamilyProposal {
 public:
  explicit RawFamilyProposal(const DistributionFamily& fam) : fam_(&fam) {}

  double sample_path(RngStream& rng, std::span<double> out) const {
    double logq = 0.0;
    for (int j = 1; j <= fam_->size(); ++j) {
      const double x = fam_->component(j).sample(rng);
      out[static_cast<std::size_t>(j - 1)] = x;
      logq += fam_->component(j).log_density(x);
    }
    return logq;
  }

  double log_density(std::span<const double> y) const {
    double logq = 0.0;
    for (int j = 1; j <= fam_->size(); ++j) {
      logq += fam_->component(j).log_density(y[static_cast<std::size_t>(j - 1)]);
    }
    return logq;
  }

 private:
  const DistributionFamily* fam_;
};

namespace detail {

inline ISReport reduce_weights(const std::vector<double>& w, std::int64_t hits) {
  const auto n = static_cast<std::int64_t>(w.size());
  double sum = 0.0, maxw = 0.0;
  for (const double v : w) {
    sum += v;
    maxw = std::max(maxw, v);
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const double v : w) {
    const double d = v - mean;
    ss += d * d;
  }
  ISReport rep;
  rep.estimate = mean;
  rep.variance_of_weights = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  rep.relative_std_error =
      std::sqrt(rep.variance_of_weights / static_cast<double>(n)) / std::max(mean, 1e-300);
  rep.n_samples = n;
  rep.hit_count = hits;
  rep.max_weight = maxw;
  return rep;
}

}  // namespace detail

/// IS estimate of P(S_{1,n} >= na): mean of exp(log p - log q) 1{sum >= na}
/// over N proposal draws. Path i uses stream (seed, i), so the report is
/// independent of the thread count.
template <class Proposal>
ISReport is_estimate(const DistributionFamily& fam, int n, double a, const Proposal& proposal,
                     std::int64_t n_samples, std::uint64_t seed, int threads = 1) {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  std::vector<double> weights(static_cast<std::size_t>(n_samples), 0.0);
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(n_samples), 0);
  const double threshold = static_cast<double>(n) * a;
  parallel_for_index(n_samples, threads, [&](std::int64_t i) {
    RngStream rng = make_stream(seed, static_cast<std::uint64_t>(i));
    std::vector<double> y(static_cast<std::size_t>(n));
    const double logq = proposal.sample_path(rng, y);
    double s = 0.0, logp = 0.0;
    for (int j = 1; j <= n; ++j) {
      s += y[static_cast<std::size_t>(j - 1)];
      logp += fam.component(j).log_density(y[static_cast<std::size_t>(j - 1)]);
    }
    if (s >= threshold) {
      const double w = std::exp(logp - logq);
      if (!std::isfinite(w)) throw NonFiniteLogDensity("non-finite importance weight");
      weights[static_cast<std::size_t>(i)] = w;
      hit[static_cast<std::size_t>(i)] = 1;
    }
  });
  std::int64_t hits = 0;
  for (const auto h : hit) hits += h;
  if (hits == 0) {
    throw DegenerateWeights("all weights are zero: the proposal missed the event entirely");
  }
  return detail::reduce_weights(weights, hits);
}

/// Plain Monte Carlo frequency estimator of P(S_{1,n} >= na).
inline ISReport naive_mc_estimate(const DistributionFamily& fam, int n, double a,
                                  std::int64_t n_samples, std::uint64_t seed, int threads = 1) {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (n != fam.size()) throw ConfigError("n must equal the family size");
  std::vector<double> w(static_cast<std::size_t>(n_samples), 0.0);
  const double threshold = static_cast<double>(n) * a;
  parallel_for_index(n_samples, threads, [&](std::int64_t i) {
    RngStream rng = make_stream(seed, static_cast<std::uint64_t>(i));
    double s = 0.0;
    for (int j = 1; j <= n; ++j) s += fam.component(j).sample(rng);
    if (s >= threshold) w[static_cast<std::size_t>(i)] = 1.0;
  });
  std::int64_t hits = 0;
  for (const double v : w) hits += v > 0.0 ? 1 : 0;
  return detail::reduce_weights(w, hits);
}

}  // namespace tiltcond
