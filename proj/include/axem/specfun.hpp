#pragma once
// Special functions underlying the modal Green's function machinery:
//  * complete elliptic integrals K(k), E(k) by the arithmetic-geometric mean;
//  * half-integer-order Legendre functions of the second kind,
//    Q_{m-1/2}(chi) for chi > 1, which are (up to normalization) the Fourier
//    coefficients of 1/rho on a circle of sources;
//  * the companion sequences S_m and T_m giving the Fourier coefficients of
//    1/rho^3 and 1/rho^2.
//
// All sequences decay like exp(-m*eta) with eta = arccosh(chi); close to
// chi = 1 the decay is slow and forward recurrences are stable, while for
// larger chi the minimal solution must be recovered by a backward (Miller)
// recurrence.

#include <vector>

#include "axem/common.hpp"

namespace axem {

struct EllipticKE {
  double K;
  double E;
};

/// Complete elliptic integrals of the first and second kind with modulus k,
///   K(k) = int_0^{pi/2} dt / sqrt(1 - k^2 sin^2 t),  0 <= k < 1.
/// Throws std::domain_error for k outside [0,1).  Relative accuracy ~1e-15.
EllipticKE complete_elliptic(double k_modulus);

/// Same integrals parameterized by the *complementary* modulus kc = sqrt(1-k^2).
/// Use this form when k is close to 1 and only kc is known accurately.
EllipticKE complete_elliptic_from_complement(double kc);

/// Argument chi > 1 carried together with a separately computed chi - 1 so
/// that near-coincident configurations (chi - 1 ~ 1e-12) keep full precision.
struct Chi {
  double v;    // chi
  double m1;   // chi - 1, computed without cancellation by the caller
};

inline Chi make_chi(double chi_minus_1) { return Chi{1.0 + chi_minus_1, chi_minus_1}; }

/// Q_{m-1/2}(chi) for m = 0..M_q.  Seeds from elliptic integrals; forward
/// three-term recurrence only in the regime where it is stable
/// (chi < 1 + delta with delta = 1e-2/(M_q+1)^2), otherwise a backward Miller
/// recurrence normalized against Q_{-1/2}.
std::vector<double> legendre_q_half_seq(const Chi& chi, int M_q);

/// The two recurrence strategies individually, for cross-validation in the
/// window where both are accurate.  The forward path runs in extended
/// precision internally; its error still grows like exp(2 m arccosh(chi)).
std::vector<double> legendre_q_half_seq_forward(const Chi& chi, int M_q);
std::vector<double> legendre_q_half_seq_miller(const Chi& chi, int M_q);

struct PowerSeqs {
  std::vector<double> S;  // Fourier sequence for (chi - cos phi)^{-3/2} scale
  std::vector<double> T;  // Fourier sequence for (chi - cos phi)^{-1}  scale
};

/// S_m and T_m for m = 0..M, defined by
///   S_m(chi) = int_0^{2pi} cos(m phi) (chi - cos phi)^{-3/2} dphi,
///   T_m(chi) = int_0^{2pi} cos(m phi) (chi - cos phi)^{-1}   dphi.
/// q_half must hold Q_{m-1/2}(chi) for m = 0..M (from legendre_q_half_seq).
PowerSeqs power_seqs(const Chi& chi, const std::vector<double>& q_half, int M);

}  // namespace axem
