#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <utility>

#include "common.hpp"

namespace tiltcond {

/// Adaptive Gauss-Kronrod over [lo, hi]; either endpoint may be infinite.
/// Throws QuadratureFailure when the refinement does not reach rel_tol.
template <class F>
double integrate(F&& f, double lo, double hi, double rel_tol = 1e-10,
                 double* err_out = nullptr) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      std::forward<F>(f), lo, hi, 15, rel_tol, &err);
  if (err_out) *err_out = err;
  if (!std::isfinite(v) || err > rel_tol * std::max(std::abs(v), 1e-300)) {
    throw QuadratureFailure("integration did not converge: value=" + std::to_string(v) +
                            " err=" + std::to_string(err));
  }
  return v;
}

/// tanh-sinh variant for integrands with endpoint singularities (used by the
/// density-derivative L1 certificate, where gamma shapes below 2 blow up at
/// the support edge).
template <class F>
double integrate_endpoint_singular(F&& f, double lo, double hi, double rel_tol = 1e-8) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  double err = 0.0, l1 = 0.0;
  const double v = integrator.integrate(std::forward<F>(f), lo, hi, rel_tol, &err, &l1);
  if (!std::isfinite(v)) {
    throw QuadratureFailure("singular integration produced a non-finite value");
  }
  return v;
}

}  // namespace tiltcond
