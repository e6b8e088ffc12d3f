#pragma once
// Generating curves for bodies of revolution and their panel discretizations.
//
// A surface of revolution is described by a curve t -> (r(t), z(t)) in the
// half-plane r >= 0, revolved about the z axis.  Curves are either closed
// (tori) or run from axis to axis (axis-touching bodies).  The mesh tiles the
// parameter domain with panels carrying p Gauss-Legendre nodes each; panel
// boundaries are snapped to geometric corners, and panels next to corners
// (or conical axis points) are refined dyadically toward them.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "axem/common.hpp"
#include "axem/legendre.hpp"

namespace axem {

struct CurveFrame {
  double r, z;      // position in the (r,z) half-plane
  double drdt, dzdt;  // parameter derivatives
  double jac;       // |gamma'(t)| = sqrt(drdt^2 + dzdt^2)
  // Unit tangent (tr, tz) and outward unit normal (nr, nz) = (tz, -tr),
  // which points into the unbounded region for the orientation conventions
  // used by the built-in curves (counterclockwise; axis-to-axis upward).
  double tr, tz, nr, nz;
};

class GeneratingCurve {
 public:
  virtual ~GeneratingCurve() = default;
  virtual void eval(double t, double* r, double* z, double* drdt,
                    double* dzdt) const = 0;

  double t_begin = 0.0, t_end = 1.0;
  bool closed = false;
  bool touches_axis = false;          // r = 0 at one or both parameter ends
  std::vector<double> corners;        // interior parameters with tangent jumps
  std::vector<double> refine_points;  // parameters to refine toward (corners
                                      // plus conical axis points)
  std::string name = "custom";
};

/// Curve defined by user-supplied callables (for tests and extensions).
class CustomCurve final : public GeneratingCurve {
 public:
  using Fn = std::function<void(double, double*, double*, double*, double*)>;
  explicit CustomCurve(Fn fn) : fn_(std::move(fn)) {}
  void eval(double t, double* r, double* z, double* drdt,
            double* dzdt) const override {
    fn_(t, r, z, drdt, dzdt);
  }

 private:
  Fn fn_;
};

/// Built-in curves: "torus" (circular-section ring), "starfish" (five-lobed
/// axis-touching body), "droplet" (smooth cap with a conical point), and
/// "cylinder" (right circular cylinder with sharp rim corners).
std::shared_ptr<GeneratingCurve> make_curve(const std::string& kind);

/// Position/derivative/frame data at parameter t.
CurveFrame frame_at(const GeneratingCurve& curve, double t);

struct Panel {
  double t0, t1;
  int level;        // dyadic refinement depth (0 = base panel)
  int first_node;   // index of the panel's first node in Mesh::nodes
};

struct MeshNode {
  double t;
  CurveFrame f;
  double w_param;  // Gauss weight scaled by the panel half-length
  double ws;       // arclength weight: w_param * jac
  int panel;
};

struct Mesh {
  std::shared_ptr<const GeneratingCurve> curve;
  int p = 16;
  bool closed = false;
  std::vector<Panel> panels;
  std::vector<MeshNode> nodes;  // panel-major, ascending t inside each panel
  QuadRule1D gl;                // p-point reference rule on [-1,1]
  std::vector<double> nodal_to_coeff;  // p x p Legendre transform

  int n_panels() const { return static_cast<int>(panels.size()); }
  int n_nodes() const { return static_cast<int>(nodes.size()); }
  /// Neighbor panel indices; -1 when there is no neighbor (open-curve ends).
  int left_neighbor(int panel) const;
  int right_neighbor(int panel) const;
  double max_panel_arclength() const;
  double total_arclength() const;
};

/// Tile the curve with n_base panels (snapped to corners, distributed across
/// corner-to-corner segments proportionally to their arclength, uniform in
/// parameter within each segment), then refine panels adjacent to each
/// refine point dyadically toward it.
///   refine_levels >= 0: fixed number of dyadic levels;
///   refine_levels < 0:  choose levels per corner so the innermost panel's
///                       parameter length drops to refine_target or below.
Mesh build_mesh(std::shared_ptr<const GeneratingCurve> curve, int n_base,
                int p, int refine_levels, double refine_target = 1e-5);

}  // namespace axem
