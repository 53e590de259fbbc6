#pragma once

#include <cmath>
#include <string>

#include "common.hpp"
#include "tilting.hpp"

namespace tiltcond {

/// Probabilists' Hermite polynomial H_nu(x), 0 <= nu <= 9, via the recurrence
/// H_{nu+1} = x H_nu - nu H_{nu-1}.
inline double hermite(int nu, double x) {
  if (nu < 0 || nu > 9) {
    throw UnsupportedDegree("hermite degree must be in 0..9, got " + std::to_string(nu));
  }
  double h_prev = 1.0;  // H_0
  if (nu == 0) return h_prev;
  double h = x;  // H_1
  for (int m = 1; m < nu; ++m) {
    const double h_next = x * h - m * h_prev;
    h_prev = h;
    h = h_next;
  }
  return h;
}

/// Coefficients of the order 3/4/5 correction polynomials for a standardized
/// sum with the given aggregate moments.
struct EdgeworthCoefficients {
  double alpha3 = 0.0;  // multiplies H_3
  double beta6 = 0.0;   // multiplies H_6
  double beta4 = 0.0;   // multiplies H_4
  double gamma9 = 0.0;  // multiplies H_9
  double gamma7 = 0.0;  // multiplies H_7
  double gamma5 = 0.0;  // multiplies H_5
};

inline EdgeworthCoefficients edgeworth_coefficients(const AggregateMoments& m) {
  if (!(m.s2 > 0.0)) throw DegenerateVariance("aggregate variance must be positive");
  EdgeworthCoefficients c;
  const double s2 = m.s2;
  const double s3 = s2 * m.sigma;            // s2^{3/2}
  const double kappa4_sum = m.mu4 - 3.0 * m.sum_s4;
  const double kappa5_sum = m.mu5 - 10.0 * m.sum_mu3_s2;
  c.alpha3 = m.mu3 / (6.0 * s3);
  c.beta6 = m.mu3 * m.mu3 / (72.0 * s2 * s2 * s2);
  c.beta4 = kappa4_sum / (24.0 * s2 * s2);
  c.gamma9 = m.mu3 * m.mu3 * m.mu3 / (1296.0 * s3 * s3 * s3);
  c.gamma7 = m.mu3 * kappa4_sum / (144.0 * s3 * s3 * m.sigma);
  c.gamma5 = kappa5_sum / (120.0 * s2 * s2 * m.sigma);
  return c;
}

/// Sum of the correction polynomials P_3..P_order at x.
inline double edgeworth_correction(const EdgeworthCoefficients& c, int order, double x) {
  if (order < 3 || order > 5) {
    throw UnsupportedOrder("expansion order must be 3, 4 or 5");
  }
  double p = c.alpha3 * hermite(3, x);
  if (order >= 4) p += c.beta6 * hermite(6, x) + c.beta4 * hermite(4, x);
  if (order >= 5) {
    p += c.gamma9 * hermite(9, x) + c.gamma7 * hermite(7, x) + c.gamma5 * hermite(5, x);
  }
  return p;
}

/// Expansion density n(x) (1 + sum P_nu(x)) for the standardized sum over the
/// moments' range. The expansion is a signed approximation: it can go
/// negative in far tails and is returned as-is.
inline double edgeworth_density(const AggregateMoments& m, int order, double x) {
  const EdgeworthCoefficients c = edgeworth_coefficients(m);
  return normal_pdf(x) * (1.0 + edgeworth_correction(c, order, x));
}

}  // namespace tiltcond
