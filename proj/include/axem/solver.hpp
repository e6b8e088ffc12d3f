#pragma once
// Scattering driver: incident fields, azimuthal Fourier decomposition of
// boundary data, per-mode transmission solves, and post-processing (far-field
// patterns, interior/exterior field evaluation, extinction-theorem error).
//
// Conventions.  The transmission problem couples an exterior medium
// (eps0, mu0) and an interior medium (eps1, mu1) at angular frequency omega
// (see Media).  Incident fields are entire Maxwell solutions sampled
// pointwise; their tangential traces n x E and n x H are decomposed on each
// node ring into azimuthal modes exp(i m theta), producing one right-hand
// side per mode for the block system assembled by quadops.  Only modes
// m >= 0 are factorized: the matrix for -m equals the matrix for +m up to
// fixed sign flips of the four row and four column blocks, so each negative
// mode costs one extra triangular solve on the cached factorization.

#include <cstdint>
#include <string>
#include <vector>

#include "axem/common.hpp"
#include "axem/geometry.hpp"
#include "axem/quadops.hpp"

namespace axem {

// ---------------------------------------------------------------------------
// Incident fields

struct FieldSample {
  V3c E, H;
};

/// A source-free Maxwell solution in the neighborhood of the scatterer,
/// evaluated pointwise in Cartesian coordinates.
class IncidentField {
 public:
  virtual ~IncidentField() = default;
  virtual FieldSample eval(const V3d& x) const = 0;
};

/// Linearly polarized plane wave at the exterior wavenumber:
///   E = p_perp exp(i k0 d.x),   H = (k0 / (omega mu0)) (d x p_perp)
///                                    exp(i k0 d.x),
/// where p_perp is the supplied polarization orthonormalized against the
/// propagation direction d, so that |d| = |d x p_perp| = 1.
class PlaneWave final : public IncidentField {
 public:
  PlaneWave(const V3d& direction, const V3d& polarization, const Media& media);
  /// Spherical-angle form: d = (cos t1 sin f1, sin t1 sin f1, cos f1) and
  /// p likewise from (t2, f2), then orthonormalized.
  static PlaneWave from_angles(double theta1, double phi1, double theta2,
                               double phi2, const Media& media);
  /// The default incidence used throughout the reference studies:
  /// (t1, f1, t2, f2) = (pi/3, 2pi/3, pi/2, pi/3).
  static PlaneWave standard(const Media& media);

  FieldSample eval(const V3d& x) const override;
  const V3d& direction() const { return d_; }
  const V3d& polarization() const { return p_; }

 private:
  V3d d_, p_;    // unit propagation direction, orthonormalized polarization
  double k0_;    // exterior wavenumber
  cplx hscale_;  // k0 / (omega mu0)
};

/// Fields radiated by a circular current loop in a homogeneous medium with
/// (possibly complex) wavenumber k:
///   E = curl A,   H = (1 / (i omega mu)) curl curl A,
///   A(x) = integral over the loop of G_k(x, y) dl(y),
/// with G_k the free-space Helmholtz kernel.  The loop lies in the plane
/// z = center.z; the line integral uses n_quad-point periodic trapezoidal
/// quadrature (spectrally accurate away from the loop).
class CurrentLoop final : public IncidentField {
 public:
  CurrentLoop(const V3d& center, double radius, cplx k, cplx mu, double omega,
              int n_quad = 64);
  /// The verification source: a loop of radius 0.42 centered at
  /// (0.4, 0.5, 5.0) radiating at the interior wavenumber of `media`.
  /// Its fields restricted to the interior region are an exact Maxwell
  /// solution there (the loop itself lies far outside every catalog body).
  static CurrentLoop verification_source(const Media& media);

  FieldSample eval(const V3d& x) const override;

 private:
  V3d center_;
  double radius_;
  cplx k_, mu_;
  double omega_;
  int n_quad_;
};

// ---------------------------------------------------------------------------
// Boundary-data decomposition

/// Modal right-hand sides of the weighted transmission system.  rhs[m + n_f]
/// holds the 4N vector for mode m in row-block order (E_t, E_theta, H_t,
/// H_theta), node-major inside blocks, scaled by the formulation's equation
/// prefactors (i omega eps0 / i omega mu0 for the direct form, swapped for
/// the indirect form).
struct ModalRhs {
  int n_f = 0;
  int n = 0;  // nodes
  std::vector<std::vector<cplx>> rhs;

  const std::vector<cplx>& mode(int m) const { return rhs[size_t(m + n_f)]; }
};

/// Samples n x E and n x H on an equispaced azimuthal grid at every node
/// ring, FFTs in theta, and selects the bandwidth N_f as the smallest m for
/// which every trailing coefficient is <= tol x (largest coefficient).  The
/// grid starts at max(64, 4 (2 ceil(k0 r_max) + 17)) points and doubles until
/// the top octave of the spectrum is resolved below tol; failure to decay by
/// 2^14 points raises NumericalError.
ModalRhs decompose_incident(const IncidentField& field, const Mesh& mesh,
                            const Media& media, Formulation form,
                            double tol = 1e-12);

// ---------------------------------------------------------------------------
// Scattering solve

/// Wall-clock seconds of the solve phases: modal kernel evaluation, matrix
/// generation (operator scatter), factorization plus first right-hand-side
/// solves, and the extra triangular solves for the negative modes.
struct SolveTimings {
  double t_kernel = 0.0;
  double t_matgen = 0.0;
  double t_solve = 0.0;
  double t_add = 0.0;
};

struct ScatterSolution {
  Formulation form = Formulation::direct;
  Media media;
  const Mesh* mesh = nullptr;
  int n_f = 0;
  /// x[m + n_f]: nodal current coefficients of mode m, length 4N, block
  /// order (J1, J2, M1, M2), node-major inside blocks.
  std::vector<std::vector<cplx>> x;
  SolveTimings timings;
  /// max-norm of the top mode's coefficients over the max-norm of all modes;
  /// small values confirm the chosen bandwidth was sufficient.
  double mode_decay = 0.0;

  const std::vector<cplx>& mode(int m) const { return x[size_t(m + n_f)]; }
};

struct SolveOptions {
  double decomp_tol = 1e-12;
  /// Modal kernel accuracy.  The evaluation pipeline is tuned for 1e-12;
  /// the value is carried for configuration round-trips.
  double kernel_tol = 1e-12;
  /// Worker threads for the per-mode factor/solve stage (0 = sequential).
  /// Mode independence makes the results identical for any thread count.
  int threads = 0;
  /// Above this byte budget the mode matrices spill to unlinked scratch
  /// files instead of RAM.
  std::size_t ram_limit_bytes = std::size_t(5) << 29;  // 2.5 GiB
  std::string scratch_dir;
};

/// Decomposes the incident field, assembles and factorizes the systems for
/// modes 0..N_f in one kernel sweep, solves each +m right-hand side, and
/// obtains each -m solution from the sign symmetry with one extra cached
/// solve.  Per-mode factorization failures are collected and re-raised as a
/// single NumericalError naming the offending modes.
ScatterSolution solve_scattering(const Mesh& mesh, const Media& media,
                                 const IncidentField& incident,
                                 Formulation form, const GGQTables& tables,
                                 const SolveOptions& opt = {});

// ---------------------------------------------------------------------------
// Post-processing

/// |E_inf| samples on the tensor grid thetas x phis; theta in [0, 2pi) is
/// azimuth, phi in [0, pi] the angle from the +z axis.
struct FarField {
  std::vector<double> thetas, phis;
  std::vector<double> magnitude;  // row-major [i_theta * phis.size() + i_phi]
  double k0 = 0.0;

  double at(int it, int ip) const {
    return magnitude[size_t(it) * phis.size() + size_t(ip)];
  }
};

/// Radiated far-field pattern of the exterior representation: per mode, the
/// azimuthal integral is carried out analytically (Bessel-function synthesis)
/// and the generator integral by the mesh's own nodes.  The surface
/// divergence entering the pattern is formed per mode as
/// (1/r) d(r J1_m)/ds + (i m / r) J2_m with spectral differentiation of the
/// per-panel Legendre expansion.
FarField far_field(const ScatterSolution& sol,
                   const std::vector<double>& thetas,
                   const std::vector<double>& phis);

enum class Region { interior, exterior };

/// Evaluates the representation fields at points bounded away from the
/// surface by at least one panel length (closer points are rejected with
/// ConfigError; no near-surface quadrature is provided).  The exterior
/// representation radiates at k0; the interior one uses k1 with coefficients
/// from the solution's formulation.
std::vector<FieldSample> eval_fields(const ScatterSolution& sol,
                                     const std::vector<V3d>& points,
                                     Region region);

/// Deterministic pseudo-random probe points inside the body of revolution,
/// kept clear of the surface by >= 1.2 max panel arclengths (relaxed
/// gradually if the body is too slim to hold that clearance).  The sequence
/// depends only on the curve name, the mesh resolution, and the seed.
std::vector<V3d> interior_probes(const Mesh& mesh, int count = 10,
                                 std::uint64_t seed = 0);

/// Relative l2 error over stacked (E, H) samples:
/// ||computed - exact||_2 / ||exact||_2.
double relative_l2_error(const std::vector<FieldSample>& computed,
                         const std::vector<FieldSample>& exact);

/// Extinction-theorem verification error.  The solution must come from the
/// indirect formulation driven by the verification-source boundary data; the
/// interior representation is evaluated at the probes and compared against
/// the analytic loop fields.
double extinction_error(const ScatterSolution& sol,
                        const std::vector<V3d>& probes);

// ---------------------------------------------------------------------------
// Numerical helpers (exposed for verification)

/// J_0(x) .. J_nmax(x) for x >= 0 by backward recurrence with ratio
/// normalization.
std::vector<double> besselj_seq(int nmax, double x);

/// Modal surface divergence (1/r) d(r j1)/ds + (i m / r) j2 at the mesh
/// nodes; j1, j2 have length N.
std::vector<cplx> modal_surface_divergence(const Mesh& mesh, const cplx* j1,
                                           const cplx* j2, int m);

}  // namespace axem
