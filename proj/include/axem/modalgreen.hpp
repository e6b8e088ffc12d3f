#pragma once
// Modal (azimuthal-Fourier) kernels of the 3-D Helmholtz Green's function
// G = exp(ik rho)/(4 pi rho) between two circles of revolution.
//
// For a target point (r_t, z_t) and source point (r_s, z_s) define
//   rho(phi)^2 = r_t^2 + r_s^2 - 2 r_t r_s cos phi + (z_t - z_s)^2.
// The mode-m kernel is
//   g1[m] = \int_0^{2pi} exp(ik rho(phi)) / (4 pi rho(phi)) e^{-im phi} dphi,
// together with the shifted combinations
//   g2[m] = (g1[m+1] + g1[m-1]) / 2,   g3[m] = (g1[m+1] - g1[m-1]) / (2i),
// the first derivatives of g1 with respect to the *target* coordinates, and
// the second target-derivative arrays, which are exposed only as differences
// between two wavenumbers (that difference is weakly singular, while each
// wavenumber's own second derivative is not).
//
// Two evaluation routes:
//  * far:  the integrand is smooth; one equispaced sampling + FFT per kernel.
//  * near: the integrand is nearly singular at phi = 0.  Each kernel is split
//    into an entire part (FFT) plus products of entire factors with the pure
//    power kernels 1/rho, 1/rho^2, 1/rho^3, whose Fourier sequences are known
//    in closed form (specfun).  The products become discrete convolutions.
//
// All returned arrays exploit parity: rho is even in phi, so every kernel
// coefficient array is even in m except g3, which is odd.  Arrays are stored
// for m = 0..Mg only; use even_at()/odd_at() for signed access.

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "axem/common.hpp"
#include "axem/specfun.hpp"

namespace axem {

struct PairGeometry {
  double r_t, z_t, r_s, z_s;
  Chi chi;         // chi = (r_t^2 + r_s^2 + (z_t-z_s)^2) / (2 r_t r_s)
  double rho_min;  // min over phi of rho = sqrt((r_t-r_s)^2 + (z_t-z_s)^2)
};

/// Builds the pair descriptor; chi - 1 is formed without cancellation.
PairGeometry make_pair_geometry(double r_t, double z_t, double r_s,
                                double z_s);

/// True when the smooth-integrand route is adequate: the pair is far apart
/// relative to the ring radii (rho_min >= 0.2 max(r_t, r_s)) or chi >= 2.
bool pair_is_far(const PairGeometry& pg);

enum class KernelPath { automatic, far, near };

/// Reusable scratch: sample/coefficient buffers and per-length tables of
/// sin^2(phi/2) and cos(phi) on equispaced grids.  One instance per worker.
class ModalGreenWorkspace {
 public:
  const std::vector<double>& sin2_half(int len);
  const std::vector<double>& cosine(int len);

  // evaluation statistics (for tests and performance reporting)
  std::int64_t n_near = 0;
  std::int64_t n_far = 0;
  std::int64_t n_fft_points = 0;

  std::vector<cplx> samp[8];
  std::vector<cplx> fft_buf;

 private:
  std::unordered_map<int, std::vector<double>> sin2_tables_;
  std::unordered_map<int, std::vector<double>> cos_tables_;
};

/// Everything the boundary-operator assembly needs for one ordered pair and a
/// wavenumber pair (k0, k1).  Arrays run over m = 0..Mg with Mg = M + 1; the
/// extra guard mode lets callers form shifted combinations at |m| = M.
struct ModalKernelBlock {
  int M = 0;
  int Mg = 0;
  // index [w] selects the wavenumber: 0 -> k0, 1 -> k1
  std::array<std::vector<cplx>, 2> g1, g2, g3, dg_dr, dg_dz;
  // second-derivative differences (value at k0 minus value at k1)
  std::vector<cplx> d2_rr, d2_rz, d2_zz;

  static cplx even_at(const std::vector<cplx>& a, int m) {
    return a[static_cast<size_t>(m < 0 ? -m : m)];
  }
  static cplx odd_at(const std::vector<cplx>& a, int m) {
    return m < 0 ? -a[static_cast<size_t>(-m)] : a[static_cast<size_t>(m)];
  }
};

/// Shifted-mode combinations from an extended even array (size Mg + 2 for
/// output size Mg + 1): even[m] = (x[m+1] + x[|m-1|])/2,
/// odd[m] = (x[m+1] - x[|m-1|])/(2i).  odd[0] is exactly zero.
void derive_g23(const std::vector<cplx>& x_ext, std::vector<cplx>& even_out,
                std::vector<cplx>& odd_out);

/// One-pair evaluation engine.  The constructor performs all transforms and
/// convolutions shared by the pair; emit() assembles the kernel block for the
/// stated orientation ("swapped" exchanges target and source, reusing every
/// transform because rho is symmetric).
class PairKernelEngine {
 public:
  /// need_* flags allow single-purpose evaluations to skip work.
  PairKernelEngine(const PairGeometry& pg, cplx k0, cplx k1, int M,
                   ModalGreenWorkspace& ws,
                   KernelPath path = KernelPath::automatic, bool need_g = true,
                   bool need_dg = true, bool need_d2 = true);

  void emit(bool swapped, ModalKernelBlock& out) const;

  bool used_far() const { return far_; }
  int n_trunc() const { return n_trunc_; }

 private:
  bool sample_and_verify(ModalGreenWorkspace& ws);
  void convolve_all();

  PairGeometry pg_;
  cplx k_[2];
  int M_, Mg_, Ms_;  // emitted modes, guard bound Mg = M+1, stencil bound M+3
  bool same_k_, need_g_, need_dg_, need_d2_, far_;
  int n_trunc_ = 0;  // smooth-coefficient truncation
  int m_q_ = 0;      // sequence budget = Ms + n_trunc

  // near route: folded coefficient arrays (m = 0..m_q_) of the entire factors
  std::vector<cplx> u1h_[2], u2h_[2], u3h_[2], d1h_;
  // near route: singular sequences scaled to 1/(4 pi rho^p)
  std::vector<double> qhat_, phat_, hhat_;
  // near route: convolution results (m = 0..Ms)
  std::vector<cplx> cq1_[2], cq2_[2], cp1_[2], cpd_[2], ch_[2], dq_, dp_;
  // far route: folded coefficient arrays (m = 0..Ms)
  std::vector<cplx> a_[2], b_[2], wdel_, wuv_;
};

// ---------------------------------------------------------------------------
// Single-quantity wrappers matching the module-level operations.  All arrays
// are even in m and returned for m = 0..M+1 (values) or 0..M+1 (derivatives).

std::vector<cplx> eval_g1(const PairGeometry& pg, cplx k, int M,
                          ModalGreenWorkspace& ws,
                          KernelPath path = KernelPath::automatic);

void eval_dg1(const PairGeometry& pg, cplx k, int M, ModalGreenWorkspace& ws,
              std::vector<cplx>& dg_dr, std::vector<cplx>& dg_dz,
              KernelPath path = KernelPath::automatic);

void eval_d2g1_diff(const PairGeometry& pg, cplx k0, cplx k1, int M,
                    ModalGreenWorkspace& ws, std::vector<cplx>& d2_rr,
                    std::vector<cplx>& d2_rz, std::vector<cplx>& d2_zz,
                    KernelPath path = KernelPath::automatic);

}  // namespace axem
