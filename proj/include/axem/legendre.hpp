#pragma once
// Gauss-Legendre rules and Legendre-polynomial utilities: nodes/weights,
// point evaluation of all orders, nodal->coefficient transform, and spectral
// differentiation of coefficient vectors.

#include <vector>

#include "axem/common.hpp"

namespace axem {

struct QuadRule1D {
  std::vector<double> x;  // nodes, ascending, in [-1,1] (or as documented)
  std::vector<double> w;  // weights
  std::size_t size() const { return x.size(); }
};

/// n-point Gauss-Legendre rule on [-1,1]; nodes accurate to machine precision.
QuadRule1D gauss_legendre(int n);

/// Values P_0(x) .. P_n(x) by the three-term recurrence.
void legendre_values(int n, double x, double* out);

/// Value of P_n(x).
double legendre_p(int n, double x);

/// Dense p x p matrix U mapping values at the p-point Gauss-Legendre nodes to
/// Legendre coefficients: c_j = sum_k U[j*p+k] v_k.  Exact (to rounding) for
/// polynomials of degree < p, since the discrete inner product integrates
/// degree <= 2p-2 exactly.
std::vector<double> legendre_nodal_to_coeff(const QuadRule1D& gl);

/// Coefficients of the derivative of a Legendre series (degree < p on [-1,1]).
/// out has length p (top coefficient zero).
void legendre_derivative_coeffs(const std::vector<cplx>& c, std::vector<cplx>& out);

/// Evaluate a Legendre series sum_j c_j P_j(x).
cplx legendre_eval(const std::vector<cplx>& c, double x);
double legendre_eval(const std::vector<double>& c, double x);

}  // namespace axem
