#include "axem/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "axem/adaptive_quadrature.hpp"

namespace axem {

namespace {

class TorusCurve final : public GeneratingCurve {
 public:
  TorusCurve() {
    t_begin = 0.0;
    t_end = 2.0 * pi;
    closed = true;
    name = "torus";
  }
  void eval(double t, double* r, double* z, double* drdt,
            double* dzdt) const override {
    *r = 2.0 + std::cos(t);
    *z = 0.5 * std::sin(t);
    *drdt = -std::sin(t);
    *dzdt = 0.5 * std::cos(t);
  }
};

class StarfishCurve final : public GeneratingCurve {
 public:
  StarfishCurve() {
    t_begin = 0.0;
    t_end = 1.0;
    touches_axis = true;
    name = "starfish";
  }
  void eval(double t, double* r, double* z, double* drdt,
            double* dzdt) const override {
    const double rho = 2.0 + 0.5 * std::cos(5.0 * pi * (t - 1.0));
    const double rhop = -2.5 * pi * std::sin(5.0 * pi * (t - 1.0));
    const double a = pi * (t - 0.5);
    const double ca = std::cos(a), sa = std::sin(a);
    *r = rho * ca;
    *z = rho * sa;
    *drdt = rhop * ca - rho * pi * sa;
    *dzdt = rhop * sa + rho * pi * ca;
  }
};

class DropletCurve final : public GeneratingCurve {
 public:
  DropletCurve() {
    t_begin = 0.5;
    t_end = 1.0;
    touches_axis = true;
    refine_points = {1.0};  // conical point on the axis
    name = "droplet";
  }
  void eval(double t, double* r, double* z, double* drdt,
            double* dzdt) const override {
    const double s = std::sin(pi * t), c = std::cos(pi * t);
    const double a = 0.5 * pi * (t - 1.5);
    const double ca = std::cos(a), sa = std::sin(a);
    *r = s * ca;
    *z = s * sa + 0.5;
    *drdt = pi * c * ca - 0.5 * pi * s * sa;
    *dzdt = pi * c * sa + 0.5 * pi * s * ca;
  }
};

class CylinderCurve final : public GeneratingCurve {
 public:
  CylinderCurve() {
    t_begin = 0.0;
    t_end = 1.0;
    touches_axis = true;
    corners = {0.25, 0.75};
    refine_points = corners;
    name = "cylinder";
  }
  // Piecewise linear through (0,-1) -> (1,-1) -> (1,1) -> (0,1) at constant
  // speed 4 (breakpoints at arclength fractions 1/4 and 3/4).
  void eval(double t, double* r, double* z, double* drdt,
            double* dzdt) const override {
    if (t <= 0.25) {
      *r = 4.0 * t;
      *z = -1.0;
      *drdt = 4.0;
      *dzdt = 0.0;
    } else if (t <= 0.75) {
      *r = 1.0;
      *z = -1.0 + 4.0 * (t - 0.25);
      *drdt = 0.0;
      *dzdt = 4.0;
    } else {
      *r = 1.0 - 4.0 * (t - 0.75);
      *z = 1.0;
      *drdt = -4.0;
      *dzdt = 0.0;
    }
  }
};

}  // namespace

std::shared_ptr<GeneratingCurve> make_curve(const std::string& kind) {
  if (kind == "torus") return std::make_shared<TorusCurve>();
  if (kind == "starfish") return std::make_shared<StarfishCurve>();
  if (kind == "droplet") return std::make_shared<DropletCurve>();
  if (kind == "cylinder") return std::make_shared<CylinderCurve>();
  throw ConfigError("unknown geometry kind: " + kind);
}

CurveFrame frame_at(const GeneratingCurve& curve, double t) {
  CurveFrame f;
  curve.eval(t, &f.r, &f.z, &f.drdt, &f.dzdt);
  f.jac = std::hypot(f.drdt, f.dzdt);
  AXEM_CHECK(f.jac > 0.0, NumericalError,
             "frame_at: degenerate parameterization (|gamma'| = 0)");
  f.tr = f.drdt / f.jac;
  f.tz = f.dzdt / f.jac;
  f.nr = f.tz;
  f.nz = -f.tr;
  return f;
}

int Mesh::left_neighbor(int panel) const {
  if (panel > 0) return panel - 1;
  return closed ? n_panels() - 1 : -1;
}

int Mesh::right_neighbor(int panel) const {
  if (panel + 1 < n_panels()) return panel + 1;
  return closed ? 0 : -1;
}

double Mesh::max_panel_arclength() const {
  double best = 0.0;
  for (const auto& pan : panels) {
    double s = 0.0;
    for (int i = 0; i < p; ++i) s += nodes[pan.first_node + i].ws;
    best = std::max(best, s);
  }
  return best;
}

double Mesh::total_arclength() const {
  double s = 0.0;
  for (const auto& nd : nodes) s += nd.ws;
  return s;
}

namespace {

double segment_arclength(const GeneratingCurve& curve, double a, double b) {
  auto r = integrate_adaptive_real(
      [&](double t) { return frame_at(curve, t).jac; }, a, b, 1e-10, 1e-14);
  return r.value.real();
}

/// Largest-remainder apportionment of n panels across segments by length
/// (every segment gets at least one panel).
std::vector<int> apportion(const std::vector<double>& lengths, int n) {
  const int nseg = static_cast<int>(lengths.size());
  double total = 0.0;
  for (double v : lengths) total += v;
  std::vector<int> counts(nseg, 1);
  int assigned = nseg;
  AXEM_CHECK(n >= nseg, ConfigError,
             "build_mesh: need at least one panel per corner-to-corner segment");
  std::vector<double> quota(nseg);
  for (int i = 0; i < nseg; ++i) quota[i] = lengths[i] / total * n;
  for (int i = 0; i < nseg; ++i) {
    int extra = std::max(0, static_cast<int>(std::floor(quota[i])) - 1);
    counts[i] += extra;
    assigned += extra;
  }
  while (assigned < n) {
    int best = 0;
    double best_rem = -1.0;
    for (int i = 0; i < nseg; ++i) {
      double rem = quota[i] - counts[i];
      if (rem > best_rem + 1e-12) {
        best_rem = rem;
        best = i;
      }
    }
    counts[best] += 1;
    ++assigned;
  }
  return counts;
}

}  // namespace

Mesh build_mesh(std::shared_ptr<const GeneratingCurve> curve, int n_base,
                int p, int refine_levels, double refine_target) {
  AXEM_CHECK(n_base >= 1, ConfigError, "build_mesh: n_base >= 1 required");
  AXEM_CHECK(p >= 2, ConfigError, "build_mesh: p >= 2 required");
  Mesh mesh;
  mesh.curve = curve;
  mesh.p = p;
  mesh.closed = curve->closed;
  mesh.gl = gauss_legendre(p);
  mesh.nodal_to_coeff = legendre_nodal_to_coeff(mesh.gl);

  // Corner-to-corner segments (snapping panel boundaries to corners).
  std::vector<double> brk = {curve->t_begin};
  for (double c : curve->corners) {
    AXEM_CHECK(c > curve->t_begin && c < curve->t_end, ConfigError,
               "build_mesh: corner outside parameter domain");
    brk.push_back(c);
  }
  brk.push_back(curve->t_end);
  std::sort(brk.begin(), brk.end());

  std::vector<double> seg_len(brk.size() - 1);
  for (std::size_t i = 0; i + 1 < brk.size(); ++i)
    seg_len[i] = segment_arclength(*curve, brk[i], brk[i + 1]);
  std::vector<int> counts = apportion(seg_len, n_base);

  std::vector<Panel> base;
  for (std::size_t i = 0; i + 1 < brk.size(); ++i) {
    const double h = (brk[i + 1] - brk[i]) / counts[i];
    for (int j = 0; j < counts[i]; ++j)
      base.push_back(Panel{brk[i] + j * h, brk[i] + (j + 1) * h, 0, 0});
  }

  // Dyadic refinement toward each refine point.  A panel [a,b] with the point
  // at a is replaced by [a, a+h/2^L], [a+h/2^L, a+h/2^{L-1}], ..., [a+h/2, b].
  auto levels_for = [&](double h) {
    if (refine_levels >= 0) return refine_levels;
    AXEM_CHECK(refine_target > 0.0, ConfigError,
               "build_mesh: refine_target must be positive");
    return std::max(0, static_cast<int>(
                           std::ceil(std::log2(h / refine_target))));
  };
  std::vector<Panel> refined;
  for (const Panel& pan : base) {
    const double h = pan.t1 - pan.t0;
    bool at_left = false, at_right = false;
    for (double rp : curve->refine_points) {
      if (std::abs(pan.t0 - rp) < 1e-12) at_left = true;
      if (std::abs(pan.t1 - rp) < 1e-12) at_right = true;
    }
    // Open-curve axis endpoints listed as refine points.
    if (!at_left && !at_right) {
      refined.push_back(pan);
      continue;
    }
    AXEM_CHECK(!(at_left && at_right), ConfigError,
               "build_mesh: a single panel spans between two refine points; "
               "increase n_base");
    const int L = levels_for(h);
    if (L == 0) {
      refined.push_back(pan);
      continue;
    }
    if (at_left) {
      double lo = pan.t0 + h / std::ldexp(1.0, L);
      refined.push_back(Panel{pan.t0, lo, L, 0});
      for (int l = L; l >= 1; --l) {
        double hi = pan.t0 + h / std::ldexp(1.0, l - 1);
        refined.push_back(Panel{lo, hi, l - 1, 0});
        lo = hi;
      }
      refined.back().t1 = pan.t1;  // guard against rounding drift
    } else {
      std::vector<Panel> tmp;
      double hi = pan.t1 - h / std::ldexp(1.0, L);
      tmp.push_back(Panel{hi, pan.t1, L, 0});
      for (int l = L; l >= 1; --l) {
        double lo = pan.t1 - h / std::ldexp(1.0, l - 1);
        tmp.push_back(Panel{lo, hi, l - 1, 0});
        hi = lo;
      }
      tmp.back().t0 = pan.t0;
      for (auto it = tmp.rbegin(); it != tmp.rend(); ++it) refined.push_back(*it);
    }
  }

  mesh.panels = std::move(refined);
  mesh.nodes.reserve(static_cast<std::size_t>(mesh.n_panels()) * p);
  for (int q = 0; q < mesh.n_panels(); ++q) {
    Panel& pan = mesh.panels[q];
    pan.first_node = static_cast<int>(mesh.nodes.size());
    const double mid = 0.5 * (pan.t0 + pan.t1);
    const double half = 0.5 * (pan.t1 - pan.t0);
    for (int i = 0; i < p; ++i) {
      MeshNode nd;
      nd.t = mid + half * mesh.gl.x[i];
      nd.f = frame_at(*curve, nd.t);
      nd.w_param = half * mesh.gl.w[i];
      nd.ws = nd.w_param * nd.f.jac;
      nd.panel = q;
      AXEM_CHECK(nd.f.r > 0.0, NumericalError,
                 "build_mesh: node radius must be positive");
      mesh.nodes.push_back(nd);
    }
  }
  return mesh;
}

}  // namespace axem
