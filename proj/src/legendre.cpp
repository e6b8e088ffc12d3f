#include "axem/legendre.hpp"

#include <algorithm>

namespace axem {

QuadRule1D gauss_legendre(int n) {
  AXEM_CHECK(n >= 1, std::invalid_argument, "gauss_legendre: n >= 1 required");
  QuadRule1D q;
  q.x.resize(n);
  q.w.resize(n);
  // Newton iteration from the Tricomi-style initial guess; roots come out in
  // descending order of cos, so fill symmetrically.
  const int m = (n + 1) / 2;
  auto eval_pn = [n](double x, double* deriv) {
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= n; ++j) {
      double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    *deriv = n * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (int i = 0; i < m; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double pp;
      double pv = eval_pn(x, &pp);
      double dx = pv / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    // Refresh P_n' at the converged node before forming the weight.
    double pp;
    eval_pn(x, &pp);
    q.x[i] = -x;
    q.x[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    q.w[i] = w;
    q.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) q.x[n / 2] = 0.0;  // exact midpoint for odd n
  return q;
}

void legendre_values(int n, double x, double* out) {
  out[0] = 1.0;
  if (n == 0) return;
  out[1] = x;
  for (int j = 2; j <= n; ++j)
    out[j] = ((2 * j - 1) * x * out[j - 1] - (j - 1) * out[j - 2]) / j;
}

double legendre_p(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return p0;
  for (int j = 2; j <= n; ++j) {
    double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

std::vector<double> legendre_nodal_to_coeff(const QuadRule1D& gl) {
  const int p = static_cast<int>(gl.size());
  std::vector<double> U(static_cast<std::size_t>(p) * p);
  std::vector<double> pv(p);
  for (int k = 0; k < p; ++k) {
    legendre_values(p - 1, gl.x[k], pv.data());
    for (int j = 0; j < p; ++j)
      U[static_cast<std::size_t>(j) * p + k] = (2.0 * j + 1.0) / 2.0 * gl.w[k] * pv[j];
  }
  return U;
}

void legendre_derivative_coeffs(const std::vector<cplx>& c, std::vector<cplx>& out) {
  // c'_j = (2j+1) * sum_{i = j+1, j+3, ...} c_i
  const int p = static_cast<int>(c.size());
  out.assign(p, cplx{});
  for (int j = p - 2; j >= 0; --j) {
    cplx acc = c[j + 1];
    if (j + 2 < p) acc += out[j + 2] / (2.0 * j + 5.0);
    out[j] = (2.0 * j + 1.0) * acc;
  }
}

template <class T>
static T legendre_eval_impl(const std::vector<T>& c, double x) {
  // Clenshaw recurrence for Legendre series.
  const int p = static_cast<int>(c.size());
  T b1{}, b2{};
  for (int j = p - 1; j >= 1; --j) {
    T b0 = c[j] + (2.0 * j + 1.0) / (j + 1.0) * x * b1 -
           (j + 1.0) / (j + 2.0) * b2;
    b2 = b1;
    b1 = b0;
  }
  return c[0] + x * b1 - 0.5 * b2;
}

cplx legendre_eval(const std::vector<cplx>& c, double x) {
  return legendre_eval_impl(c, x);
}
double legendre_eval(const std::vector<double>& c, double x) {
  return legendre_eval_impl(c, x);
}

}  // namespace axem
