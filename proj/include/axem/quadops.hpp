#pragma once
// Nystrom quadrature machinery and per-mode boundary-operator assembly.
//
// Quadrature: panel-to-panel interactions use three rule families.
//  * far panels: the source panel's own Gauss-Legendre nodes and weights
//    (the kernel is analytic there);
//  * self panel: one precomputed rule per target node, exact for integrands
//    of the form p(y) log|x_n - y| + q(y) with p, q polynomials of degree
//    < p and x_n the target's Gauss node;
//  * adjacent panels (chain neighbors, including wrap-around and panels that
//    meet across a corner): a single graded composite rule, accurate for
//    smooth-plus-log integrands whose singularity lies beyond the panel
//    endpoint at any distance down to `adjacent_clearance`.
// Self/adjacent rules evaluate the kernel at off-grid support nodes; values
// are mapped back to the p nodal unknowns through the panel's Legendre
// interpolation (the U transform), which is exactly the quadrature-kernel
// construction Q(x_ln, x_ik) = sum_j U_jk I_j(x_ln).
//
// Assembly: for each azimuthal mode m the transmission system couples the
// four nodal density blocks (J1, J2, M1, M2) through the weakly singular
// operator N^k (per wavenumber) and the difference K^{k0} - K^{k1}; only the
// difference of the hypersingular parts is ever formed (modalgreen exposes
// second target-derivatives exclusively as two-wavenumber differences).
// Matrices are stored with symmetric L2 weighting: entry (i,j) is scaled by
// sqrt(w_i ds_i) / sqrt(w_j ds_j), which leaves the identity part untouched
// and equilibrates dyadically refined meshes; solve() undoes the scaling.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "axem/common.hpp"
#include "axem/geometry.hpp"
#include "axem/legendre.hpp"
#include "axem/modalgreen.hpp"

namespace axem {

// ---------------------------------------------------------------------------
// Quadrature tables

/// Nodes and weights on the panel reference interval [-1, 1].
struct PanelRule {
  std::vector<double> y, w;
  int size() const { return static_cast<int>(y.size()); }
};

struct GGQTables {
  int p = 0;
  /// One rule per target node; rule n integrates p(y) log|x_n - y| + q(y)
  /// exactly (x_n = n-th Gauss-Legendre node of order p).
  std::vector<PanelRule> self_rules;
  /// Graded rule for a log singularity beyond the +1 endpoint; mirror the
  /// nodes for a singularity beyond -1.
  PanelRule adjacent;
  /// Smallest singularity distance past the endpoint (in panel coordinates)
  /// for which `adjacent` retains full accuracy.
  double adjacent_clearance = 0.0;
  /// "constructed" or the checksum line of the data file the tables came from.
  std::string provenance;
};

/// n-point Gauss rule for the weight -log(u) on [0, 1]:
/// sum w_q f(u_q) = int_0^1 f(u) (-log u) du for deg f <= 2n-1.
QuadRule1D gauss_log_rule(int n);

/// Numeric table construction (p = 16 supported; other orders best-effort).
GGQTables build_ggq_tables(int p);

/// Worst defect of the tables over their exactness families (self rules:
/// all p targets x {P_k log|x_n - y|, P_k}; adjacent rule: a singularity
/// sweep down to adjacent_clearance).  Reference values by adaptive
/// quadrature with singularity splitting.
double ggq_max_residual(const GGQTables& t);

void write_ggq_tables(const GGQTables& t, const std::string& path);
GGQTables read_ggq_tables(const std::string& path);

/// Load `ggq_p<p>_v1.txt` from data_dir (checksum-verified) if present,
/// otherwise build numerically.  Either way the tables must pass
/// ggq_max_residual <= 1e-13 or a NumericalError is thrown.
GGQTables load_or_build_ggq(int p, const std::string& data_dir = "");

// ---------------------------------------------------------------------------
// Values-at-nodes -> Legendre-coefficients transform (p x p)

struct LegendreTransform {
  int p = 0;
  std::vector<double> u;  // row-major: coeff[j] = sum_k u[j*p + k] * f(x_k)
};
LegendreTransform make_legendre_transform(int p);

// ---------------------------------------------------------------------------
// Media and formulations

struct Media {
  double eps0 = 1.0;
  double mu0 = 1.0;
  cplx eps1{1.0, 0.0};
  cplx mu1{1.0, 0.0};
  double omega = 1.0;

  cplx k0() const;  // omega * sqrt(eps0 mu0)
  cplx k1() const;  // omega * sqrt(eps1 mu1), branch with Im >= 0
  void validate() const;  // Re eps1 > 0, Im eps1 >= 0, omega > 0

  /// Wavenumber-style specification: omega = k0, eps0 = mu0 = mu1 = 1,
  /// eps1 = (k1/k0)^2.
  static Media from_wavenumbers(double k0, cplx k1);
};

enum class Formulation { direct, indirect };

// ---------------------------------------------------------------------------
// Panel relations and generic quadrature rows

enum class PanelRelation {
  self,
  adjacent_low,   // source panel's low-t end touches the target panel
  adjacent_high,  // source panel's high-t end touches the target panel
  far
};
PanelRelation classify_panels(const Mesh& mesh, int target_panel,
                              int source_panel);

/// Scalar kernel sampled at (fixed target node, arbitrary source point).
using PointKernel =
    std::function<cplx(const MeshNode& target, const CurveFrame& src)>;

/// Row of quadrature weights Q such that
///   int_panel ker(x_t, y) psi(y) ds(y)  ~=  sum_k Q_k psi(x_ik)
/// over the p nodes of source_panel, choosing the far/self/adjacent rule
/// from the panel relation.
std::vector<cplx> quadrature_row(const Mesh& mesh, const GGQTables& tables,
                                 int target_node, int source_panel,
                                 const PointKernel& ker);

// ---------------------------------------------------------------------------
// Modal layer-potential coefficient blocks (verification interface)

enum class CDerivOrder { value, first, second_difference };

/// Dense matrices mapping stacked nodal densities (J1; J2) (length 2N) to the
/// requested coefficient quantities at all N nodes.  Quantity order:
///   value:             c1, c2, c3
///   first:             dc1/dr, dc1/dz, dc2/dr, dc2/dz, dc3/dr, dc3/dz
///   second_difference: c1_rr, c1_rz, c1_zz, c2_rr, c2_rz, c2_zz,
///                      c3_rr, c3_rz, c3_zz   (value at k0 minus value at k1)
struct CBlockMatrices {
  int n = 0;                              // number of nodes
  std::vector<std::vector<cplx>> mats;    // each row-major n x 2n
};
CBlockMatrices assemble_c_blocks(const Mesh& mesh, cplx k0, cplx k1, int m,
                                 CDerivOrder order, const GGQTables& tables);

// ---------------------------------------------------------------------------
// Per-mode transmission systems

struct ModalSystem {
  int m = 0;
  int n = 0;                   // 4 * N_nodes
  std::vector<cplx> a;         // weighted matrix, column-major n x n
  std::vector<double> scale;   // sqrt(w ds/dt) per degree of freedom
  std::vector<std::int32_t> ipiv;
  bool factorized = false;
  double anorm1 = -1.0;        // 1-norm prior to factorization
};

/// RAM- or disk-backed storage for the matrices of many modes, written as
/// column runs during the single kernel sweep and fetched whole for
/// factorization.  Disk files are unlinked temporaries under scratch_dir.
class ModeMatrixStore {
 public:
  ModeMatrixStore(int n, int n_modes, std::size_t ram_limit_bytes,
                  std::string scratch_dir = "");
  ~ModeMatrixStore();
  ModeMatrixStore(const ModeMatrixStore&) = delete;
  ModeMatrixStore& operator=(const ModeMatrixStore&) = delete;

  int n() const { return n_; }
  int n_modes() const { return n_modes_; }
  bool on_disk() const { return on_disk_; }

  /// data: column-major n x ncols block, stored into columns
  /// [first_col, first_col + ncols).
  void write_column_run(int mode_idx, int first_col, int ncols,
                        const cplx* data);
  void fetch(int mode_idx, std::vector<cplx>& out) const;
  void release(int mode_idx);

 private:
  int n_ = 0, n_modes_ = 0;
  bool on_disk_ = false;
  std::vector<std::vector<cplx>> ram_;
  std::vector<int> fds_;
};

/// Wall-clock split of the assembly sweep (seconds) plus pair counts.
struct AssemblyStats {
  double t_kernel = 0.0;   // modal kernel evaluation (engine + emit)
  double t_scatter = 0.0;  // operator combination and matrix scatter
  std::int64_t n_pairs_far = 0;
  std::int64_t n_pairs_near = 0;
};

/// One kernel sweep over (target node, source support point) pairs filling
/// the matrices of every requested mode (signed azimuthal indices).
void assemble_mode_matrices(Formulation form, const Mesh& mesh,
                            const Media& media, const std::vector<int>& modes,
                            const GGQTables& tables, ModeMatrixStore& store,
                            AssemblyStats* stats = nullptr);

/// Convenience single-mode assembly (tests and small studies).
ModalSystem assemble_mode_matrix(Formulation form, const Mesh& mesh,
                                 const Media& media, int m,
                                 const GGQTables& tables);

/// Build a ModalSystem around an externally produced weighted matrix.
ModalSystem make_modal_system(int m, int n, std::vector<cplx> a,
                              std::vector<double> scale);

/// Per-DOF scale vector sqrt(w ds/dt) for a mesh (length 4N, block order).
std::vector<double> l2_scale_vector(const Mesh& mesh);

void factorize(ModalSystem& sys);
/// Solves the physically scaled system: rhs and returned solution are
/// unweighted nodal values.
std::vector<cplx> solve(const ModalSystem& sys, const std::vector<cplx>& rhs);
/// 1-norm condition estimate of the weighted matrix (after factorize()).
double condition_estimate(const ModalSystem& sys);

}  // namespace axem
