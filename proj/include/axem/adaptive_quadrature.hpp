#pragma once
// Globally adaptive Gauss-Kronrod (7,15) quadrature used for reference
// ("oracle") evaluations of defining integrals and for precomputing moment
// data.  Worst-interval-first refinement with an explicit error estimate.

#include <functional>
#include <utility>

#include "axem/common.hpp"

namespace axem {

struct QuadResult {
  cplx value{};
  double error{};      // estimated absolute error
  int evaluations{};   // number of integrand evaluations
  bool converged{};
};

/// Integrate f over [a,b] until the estimated absolute error satisfies
/// err <= max(abs_tol, rel_tol*|I|) or max_intervals is reached.
QuadResult integrate_adaptive(const std::function<cplx(double)>& f, double a,
                              double b, double rel_tol, double abs_tol,
                              int max_intervals = 20000);

/// Real-valued convenience wrapper.
QuadResult integrate_adaptive_real(const std::function<double(double)>& f,
                                   double a, double b, double rel_tol,
                                   double abs_tol, int max_intervals = 20000);

}  // namespace axem
