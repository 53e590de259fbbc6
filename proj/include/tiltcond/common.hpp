#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace tiltcond {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ThetaOutOfDomain : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct UnsupportedOrder : Error { using Error::Error; };
struct UnsupportedDegree : Error { using Error::Error; };
struct CompactOutsideTheta : Error { using Error::Error; };
struct TargetOutsideSupport : Error { using Error::Error; };
struct BracketFailure : Error { using Error::Error; };
struct DegenerateVariance : Error { using Error::Error; };
struct EmptyTailRange : Error { using Error::Error; };
struct QuadratureFailure : Error { using Error::Error; };
struct ResidualMeanOutOfSupport : Error { using Error::Error; };
struct GridUnderflow : Error { using Error::Error; };
struct GridTooCoarse : Error { using Error::Error; };
struct ZeroDenominator : Error { using Error::Error; };
struct NotGaussianFamily : Error { using Error::Error; };
struct NonFiniteLogDensity : Error { using Error::Error; };
struct DegenerateWeights : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

/// Open interval (lo, hi); either endpoint may be infinite.
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains_strict(double x) const { return x > lo && x < hi; }
  bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool operator==(const Interval&) const = default;
};

inline std::string to_string(const Interval& iv) {
  return "(" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) + ")";
}

/// 1-based inclusive index range (p, q) into a family's component list.
struct IndexRange {
  int lo = 1;
  int hi = 1;

  int count() const { return hi - lo + 1; }
  bool operator==(const IndexRange&) const = default;
};

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
inline double log_normal_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

}  // namespace tiltcond
