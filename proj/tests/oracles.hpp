#pragma once
// Reference ("oracle") evaluations used by the test suites: brute-force
// adaptive quadrature of the defining integrals, independent of the library's
// production evaluation paths.

#include <cmath>
#include <functional>

#include "axem/adaptive_quadrature.hpp"
#include "axem/common.hpp"
#include "axem/specfun.hpp"

namespace axem::oracle {

struct Value {
  double v;
  double err;  // quadrature error estimate
};

struct CValue {
  cplx v;
  double err;
};

/// Q_{m-1/2}(chi) = 2^{-1/2} int_0^pi cos(m phi) (chi - cos phi)^{-1/2} dphi.
inline Value q_half(double, double chi_m1, int m) {
  auto r = integrate_adaptive_real(
      [&](double phi) {
        double den = chi_m1 + 2.0 * sq(std::sin(0.5 * phi));
        return std::cos(m * phi) / std::sqrt(den);
      },
      0.0, pi, 1e-14, 1e-300);
  return {r.value.real() / std::sqrt(2.0), r.error / std::sqrt(2.0)};
}

/// Q_nu(x) = int_0^inf (x + sqrt(x^2-1) cosh t)^{-nu-1} dt: a second defining
/// integral whose integrand never oscillates, so it stays accurate deep into
/// the exponentially small tail.
inline Value q_half_monotone(double chi, double chi_m1, int m) {
  const double nu = m - 0.5;
  const double root = std::sqrt(chi_m1 * (chi + 1.0));
  const double tmax = 60.0 / (nu + 1.0) + 30.0;
  auto r = integrate_adaptive_real(
      [&](double t) {
        return std::exp(-(nu + 1.0) * std::log(chi + root * std::cosh(t)));
      },
      0.0, tmax, 1e-14, 1e-300);
  return {r.value.real(), r.error};
}

/// S_m(chi) = int_0^{2pi} cos(m phi) (chi - cos phi)^{-3/2} dphi.
inline Value s_seq(double, double chi_m1, int m) {
  auto r = integrate_adaptive_real(
      [&](double phi) {
        double den = chi_m1 + 2.0 * sq(std::sin(0.5 * phi));
        return std::cos(m * phi) / (den * std::sqrt(den));
      },
      0.0, pi, 1e-14, 1e-300);
  return {2.0 * r.value.real(), 2.0 * r.error};
}

/// T_m(chi) = int_0^{2pi} cos(m phi) (chi - cos phi)^{-1} dphi.
inline Value t_seq(double, double chi_m1, int m) {
  auto r = integrate_adaptive_real(
      [&](double phi) {
        double den = chi_m1 + 2.0 * sq(std::sin(0.5 * phi));
        return std::cos(m * phi) / den;
      },
      0.0, pi, 1e-14, 1e-300);
  return {2.0 * r.value.real(), 2.0 * r.error};
}

// ---------------------------------------------------------------------------
// Modal kernel oracles: direct adaptive quadrature of the defining phi
// integrals, written straight from G = exp(ik rho)/(4 pi rho) and its
// coordinate derivatives (no kernel splitting, no convolution).

struct ModalPair {
  double rt, zt, rs, zs;
};

inline double modal_rho(const ModalPair& p, double phi) {
  double zd = p.zt - p.zs;
  double rm2 = sq(p.rt - p.rs) + zd * zd;
  double s = std::sin(0.5 * phi);
  return std::sqrt(rm2 + 4.0 * p.rt * p.rs * s * s);
}

/// g1[m] = 2 int_0^pi cos(m phi) exp(ik rho)/(4 pi rho) dphi.
inline CValue modal_g1(const ModalPair& p, cplx k, int m, double tol = 1e-13) {
  auto r = integrate_adaptive(
      [&](double phi) -> cplx {
        double rho = modal_rho(p, phi);
        return std::cos(m * phi) * std::exp(iu * k * rho) / (4.0 * pi * rho);
      },
      0.0, pi, tol, 1e-300, 200000);
  return {2.0 * r.value, 2.0 * r.error};
}

/// d g1[m] / d r_t  (wrt_r) or d g1[m] / d z_t:
///   2 int_0^pi cos(m phi) u_a(phi) exp(ik rho)(ik rho - 1)/(4 pi rho^3) dphi
/// with u_r = r_t - r_s cos phi and u_z = z_t - z_s.
inline CValue modal_dg1(const ModalPair& p, cplx k, int m, bool wrt_r,
                        double tol = 1e-13) {
  auto r = integrate_adaptive(
      [&](double phi) -> cplx {
        double rho = modal_rho(p, phi);
        double ua = wrt_r ? (p.rt - p.rs * std::cos(phi)) : (p.zt - p.zs);
        cplx x = iu * k * rho;
        return std::cos(m * phi) * ua * std::exp(x) * (x - 1.0) /
               (4.0 * pi * rho * rho * rho);
      },
      0.0, pi, tol, 1e-300, 200000);
  return {2.0 * r.value, 2.0 * r.error};
}

/// Second target-derivative difference between wavenumbers:
///   d2/(da db) g1[m] at k0 minus the same at k1, with
///   d2 G/(da db) = delta_ab W1 + u_a u_b W2,
///   W1 = exp(ik rho)(ik rho - 1)/(4 pi rho^3),
///   W2 = exp(ik rho)(3 - 3 ik rho - k^2 rho^2)/(4 pi rho^5).
/// ab: 0 = rr, 1 = rz, 2 = zz.
inline CValue modal_d2diff(const ModalPair& p, cplx k0, cplx k1, int m, int ab,
                           double tol = 1e-13) {
  auto r = integrate_adaptive(
      [&](double phi) -> cplx {
        double rho = modal_rho(p, phi);
        double ur = p.rt - p.rs * std::cos(phi);
        double uz = p.zt - p.zs;
        double uab = (ab == 0) ? ur * ur : (ab == 1) ? ur * uz : uz * uz;
        double dab = (ab == 1) ? 0.0 : 1.0;
        double r3 = rho * rho * rho;
        double r5 = r3 * rho * rho;
        cplx w = 0.0;
        for (int s = 0; s < 2; ++s) {
          cplx k = s == 0 ? k0 : k1;
          double sgn = s == 0 ? 1.0 : -1.0;
          cplx x = iu * k * rho;
          cplx e = std::exp(x);
          cplx w1 = e * (x - 1.0) / (4.0 * pi * r3);
          cplx w2 = e * (3.0 - 3.0 * x - k * k * rho * rho) / (4.0 * pi * r5);
          w += sgn * (dab * w1 + uab * w2);
        }
        return std::cos(m * phi) * w;
      },
      0.0, pi, tol, 1e-300, 200000);
  return {2.0 * r.value, 2.0 * r.error};
}

}  // namespace axem::oracle
