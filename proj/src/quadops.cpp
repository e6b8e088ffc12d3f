#include "axem/quadops.hpp"

#define LAPACK_COMPLEX_CUSTOM
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "axem/adaptive_quadrature.hpp"

namespace axem {

static_assert(sizeof(lapack_int) == sizeof(std::int32_t),
              "LP64 LAPACK interface expected");

namespace {

// ===========================================================================
// Gauss rule for the weight -log(u) on [0, 1]
//
// Recurrence coefficients of the orthogonal polynomials are recovered from
// modified moments against monic shifted Legendre polynomials (a classically
// well-conditioned combination), then nodes and weights follow from the
// symmetric tridiagonal eigenproblem.  The modified moments are available in
// closed form:
//   int_0^1 Pshift_j(u) (-log u) du = 1 (j = 0),  (-1)^j / (j (j+1)) (j >= 1)
// and the monic normalization divides by the leading coefficient C(2j, j).

long double shifted_monic_beta(int l) {
  const long double ll = l;
  return ll * ll / (4.0L * (4.0L * ll * ll - 1.0L));
}

}  // namespace

QuadRule1D gauss_log_rule(int n) {
  AXEM_CHECK(n >= 1 && n <= 48, ConfigError, "gauss_log_rule: bad order");
  const int n2 = 2 * n;

  std::vector<long double> mm(n2);
  mm[0] = 1.0L;
  long double binom = 1.0L;  // C(2j, j)
  for (int j = 1; j < n2; ++j) {
    binom *= 2.0L * (2 * j - 1) / j;
    const long double base =
        (j % 2 ? -1.0L : 1.0L) / (static_cast<long double>(j) * (j + 1));
    mm[j] = base / binom;
  }

  std::vector<long double> alpha(n), beta(n);
  std::vector<long double> s_old(n2, 0.0L), s_cur(mm), s_new(n2, 0.0L);
  alpha[0] = 0.5L + mm[1] / mm[0];
  beta[0] = mm[0];
  for (int k = 1; k < n; ++k) {
    for (int l = k; l <= n2 - k - 1; ++l) {
      s_new[l] = s_cur[l + 1] - (alpha[k - 1] - 0.5L) * s_cur[l] -
                 beta[k - 1] * s_old[l] + shifted_monic_beta(l) * s_cur[l - 1];
    }
    alpha[k] = 0.5L + s_new[k + 1] / s_new[k] - s_cur[k] / s_cur[k - 1];
    beta[k] = s_new[k] / s_cur[k - 1];
    std::swap(s_old, s_cur);
    std::swap(s_cur, s_new);
    std::fill(s_new.begin(), s_new.end(), 0.0L);
  }

  std::vector<double> d(n), e(std::max(0, n - 1)), z(size_t(n) * n);
  for (int k = 0; k < n; ++k) d[k] = static_cast<double>(alpha[k]);
  for (int k = 0; k + 1 < n; ++k) {
    AXEM_CHECK(beta[k + 1] > 0.0L, NumericalError,
               "gauss_log_rule: nonpositive recurrence coefficient");
    e[k] = static_cast<double>(sqrtl(beta[k + 1]));
  }
  const lapack_int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', n, d.data(),
                                        e.data(), z.data(), n);
  AXEM_CHECK(info == 0, NumericalError, "gauss_log_rule: eigen solve failed");

  QuadRule1D rule;
  rule.x = d;  // ascending eigenvalues
  rule.w.resize(n);
  const double mass = static_cast<double>(beta[0]);
  for (int k = 0; k < n; ++k) {
    const double z0 = z[size_t(k) * n];  // first component of eigenvector k
    rule.w[k] = mass * z0 * z0;
    AXEM_CHECK(rule.x[k] > 0.0 && rule.x[k] < 1.0, NumericalError,
               "gauss_log_rule: node outside (0,1)");
  }
  return rule;
}

// ===========================================================================
// Table construction

namespace {

// Weights on one side of a self rule: support nodes are composite
// Gauss-Legendre points on dyadically graded subintervals of [0,1] (graded
// toward the u = 0 singularity), and the weights are chosen so the rule
// integrates every function in span{Pshift_j(u), Pshift_j(u) (-log u) : j < p}
// exactly.  That family is numerically rank-deficient (the log part is almost
// polynomial-representable away from 0), so a direct moment-system solve is
// hopeless; instead the family is orthonormalized under the discrete inner
// product <f,g> = sum_q omega_q f(u_q) g(u_q) by modified Gram-Schmidt with
// re-orthogonalization in extended precision, carrying each function's exact
// integral through the same linear combinations.  The weight vector is the
// resulting integration representer w_q = omega_q sum_k mu_k e_k(u_q), which
// is the minimum-norm exact rule on the span; directions whose norm collapses
// during orthogonalization are numerically zero functions (their integrals
// vanish to the same order), so dropping them is harmless.
void build_self_side(int p, std::vector<double>& u_out,
                     std::vector<double>& w_out) {
  std::vector<long double> u, om;
  {
    const auto gl = gauss_legendre(12);
    const double bp[] = {0.0, 1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};
    for (int i = 0; i + 1 < 5; ++i)
      for (size_t k = 0; k < gl.size(); ++k) {
        const long double mid = 0.5L * (bp[i] + bp[i + 1]);
        const long double half = 0.5L * (bp[i + 1] - bp[i]);
        u.push_back(mid + half * static_cast<long double>(gl.x[k]));
        om.push_back(half * static_cast<long double>(gl.w[k]));
      }
  }
  const int nn = static_cast<int>(u.size());
  const int nf = 2 * p;

  std::vector<std::vector<long double>> f(nf, std::vector<long double>(nn));
  std::vector<long double> mom(nf, 0.0L);
  std::vector<double> pv(p);
  for (int q = 0; q < nn; ++q) {
    legendre_values(p - 1, 2.0 * static_cast<double>(u[q]) - 1.0, pv.data());
    const long double nlog = -logl(u[q]);
    for (int j = 0; j < p; ++j) {
      f[2 * j][q] = pv[j];
      f[2 * j + 1][q] = pv[j] * nlog;
    }
  }
  mom[0] = 1.0L;  // int Pshift_0
  mom[1] = 1.0L;  // int -log u
  for (int j = 1; j < p; ++j)
    mom[2 * j + 1] =
        (j % 2 ? -1.0L : 1.0L) / (static_cast<long double>(j) * (j + 1));

  auto dot = [&](const std::vector<long double>& a,
                 const std::vector<long double>& b) {
    long double s = 0.0L;
    for (int q = 0; q < nn; ++q) s += om[q] * a[q] * b[q];
    return s;
  };

  std::vector<std::vector<long double>> e;
  std::vector<long double> emom;
  for (int i = 0; i < nf; ++i) {
    std::vector<long double> v = f[i];
    long double mv = mom[i];
    const long double orig = sqrtl(dot(v, v));
    for (int pass = 0; pass < 2; ++pass)
      for (size_t k = 0; k < e.size(); ++k) {
        const long double c = dot(v, e[k]);
        for (int q = 0; q < nn; ++q) v[q] -= c * e[k][q];
        mv -= c * emom[k];
      }
    const long double nrm = sqrtl(dot(v, v));
    if (nrm < 1e-14L * orig) {
      AXEM_CHECK(fabsl(mv) < 1e-12L, NumericalError,
                 "self-rule basis degeneracy with non-vanishing moment");
      continue;
    }
    for (int q = 0; q < nn; ++q) v[q] /= nrm;
    e.push_back(std::move(v));
    emom.push_back(mv / nrm);
  }

  std::vector<long double> w(nn, 0.0L);
  for (size_t k = 0; k < e.size(); ++k)
    for (int q = 0; q < nn; ++q) w[q] += emom[k] * e[k][q];

  u_out.resize(nn);
  w_out.resize(nn);
  for (int q = 0; q < nn; ++q) {
    u_out[q] = static_cast<double>(u[q]);
    w_out[q] = static_cast<double>(om[q] * w[q]);
  }

  // Verify the double-rounded rule against the raw moment conditions.
  long double worst = 0.0L;
  for (int i = 0; i < nf; ++i) {
    long double s = mom[i];
    for (int q = 0; q < nn; ++q)
      s -= static_cast<long double>(w_out[q]) * f[i][q];
    worst = std::max(worst, fabsl(s));
  }
  AXEM_CHECK(static_cast<double>(worst) < 5e-14, NumericalError,
             "self-rule weights did not refine to tolerance");
}

/// int_{-1}^{1} P_k(y) log|x - y| dy for |x| < 1, via second-kind Legendre
/// functions on the cut (forward recurrence, extended precision; both
/// homogeneous solutions are O(1) on the cut so the recurrence is benign).
double oncut_log_moment(int k, double xd) {
  const long double x = xd;
  if (k == 0)
    return static_cast<double>((1.0L - x) * logl(1.0L - x) +
                               (1.0L + x) * logl(1.0L + x) - 2.0L);
  std::vector<long double> q(size_t(k) + 2);
  q[0] = 0.5L * logl((1.0L + x) / (1.0L - x));
  q[1] = x * q[0] - 1.0L;
  for (int j = 2; j <= k + 1; ++j)
    q[j] = ((2.0L * j - 1.0L) * x * q[j - 1] - (j - 1.0L) * q[j - 2]) / j;
  return static_cast<double>(2.0L / (2 * k + 1) * (q[k + 1] - q[k - 1]));
}

constexpr double kAdjacentClearance = 5e-4;
constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

GGQTables build_ggq_tables(int p) {
  AXEM_CHECK(p >= 4 && p <= 32, ConfigError, "build_ggq_tables: bad order");
  GGQTables t;
  t.p = p;
  t.provenance = "constructed";
  t.adjacent_clearance = kAdjacentClearance;

  const auto glp = gauss_legendre(p);
  std::vector<double> su, sw;
  build_self_side(p, su, sw);
  const int ns = static_cast<int>(su.size());

  t.self_rules.resize(p);
  for (int n = 0; n < p; ++n) {
    const double x = glp.x[n];
    PanelRule& rule = t.self_rules[n];
    rule.y.reserve(2 * ns);
    rule.w.reserve(2 * ns);
    for (int side = 0; side < 2; ++side) {
      const double len = side == 0 ? x + 1.0 : 1.0 - x;
      const double dir = side == 0 ? -1.0 : 1.0;
      for (int q = 0; q < ns; ++q) {
        rule.y.push_back(x + dir * len * su[q]);
        rule.w.push_back(len * sw[q]);
      }
    }
  }

  // Adjacent rule: composite Gauss-Legendre on intervals graded dyadically
  // toward the +1 endpoint.  Each interval keeps the kernel singularity (at
  // distance >= adjacent_clearance past +1) at least one interval length
  // away, which is ample for the 12-point panels.
  const auto gl12 = gauss_legendre(12);
  std::vector<double> bp = {-1.0, 0.0};
  for (int j = 1; j <= 11; ++j) bp.push_back(1.0 - std::ldexp(1.0, -j));
  bp.push_back(1.0);
  for (size_t i = 0; i + 1 < bp.size(); ++i) {
    const double a = bp[i], b = bp[i + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (size_t q = 0; q < gl12.size(); ++q) {
      t.adjacent.y.push_back(mid + half * gl12.x[q]);
      t.adjacent.w.push_back(half * gl12.w[q]);
    }
  }
  return t;
}

double ggq_max_residual(const GGQTables& t) {
  AXEM_CHECK(t.p >= 4 && static_cast<int>(t.self_rules.size()) == t.p,
             ConfigError, "ggq_max_residual: malformed tables");
  const auto glp = gauss_legendre(t.p);
  double worst = 0.0;

  for (int n = 0; n < t.p; ++n) {
    const PanelRule& rule = t.self_rules[n];
    const double x = glp.x[n];
    for (int k = 0; k < t.p; ++k) {
      double slog = 0.0, spoly = 0.0;
      for (int q = 0; q < rule.size(); ++q) {
        const double pk = legendre_p(k, rule.y[q]);
        slog += rule.w[q] * pk * std::log(std::fabs(x - rule.y[q]));
        spoly += rule.w[q] * pk;
      }
      worst = std::max(worst, std::fabs(slog - oncut_log_moment(k, x)));
      worst = std::max(worst, std::fabs(spoly - (k == 0 ? 2.0 : 0.0)));
    }
  }

  const double deltas[] = {t.adjacent_clearance, 1e-3, 2e-3, 5e-3, 1e-2,
                           3e-2,                 0.1,  0.3,  1.0,  3.0,
                           10.0};
  for (double delta : deltas) {
    const double xs = 1.0 + delta;
    for (int k = 0; k < t.p; ++k) {
      double s = 0.0, spoly = 0.0;
      for (int q = 0; q < t.adjacent.size(); ++q) {
        const double pk = legendre_p(k, t.adjacent.y[q]);
        s += t.adjacent.w[q] * pk * std::log(xs - t.adjacent.y[q]);
        spoly += t.adjacent.w[q] * pk;
      }
      const int kk = k;
      auto ref = integrate_adaptive_real(
          [kk, xs](double y) { return legendre_p(kk, y) * std::log(xs - y); },
          -1.0, 1.0, 1e-15, 1e-15, 40000);
      AXEM_CHECK(ref.converged, NumericalError,
                 "ggq_max_residual: reference integral did not converge");
      worst = std::max(worst, std::fabs(s - ref.value.real()));
      worst = std::max(worst, std::fabs(spoly - (k == 0 ? 2.0 : 0.0)));
    }
  }
  return worst;
}

namespace {

void append_rule(std::ostringstream& os, const PanelRule& r) {
  char buf[64];
  for (int q = 0; q < r.size(); ++q) {
    std::snprintf(buf, sizeof buf, "%a %a\n", r.y[q], r.w[q]);
    os << buf;
  }
}

bool parse_rule(std::istream& is, int count, PanelRule& r) {
  r.y.resize(count);
  r.w.resize(count);
  std::string sy, sw;
  for (int q = 0; q < count; ++q) {
    if (!(is >> sy >> sw)) return false;
    char* end = nullptr;
    r.y[q] = std::strtod(sy.c_str(), &end);
    if (end == sy.c_str()) return false;
    r.w[q] = std::strtod(sw.c_str(), &end);
    if (end == sw.c_str()) return false;
  }
  return true;
}

std::string tables_payload(const GGQTables& t) {
  std::ostringstream os;
  for (int n = 0; n < t.p; ++n) {
    os << "self " << n << " " << t.self_rules[n].size() << "\n";
    append_rule(os, t.self_rules[n]);
  }
  os << "adjacent " << t.adjacent.size() << "\n";
  append_rule(os, t.adjacent);
  return os.str();
}

}  // namespace

void write_ggq_tables(const GGQTables& t, const std::string& path) {
  const std::string payload = tables_payload(t);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", t.adjacent_clearance);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  AXEM_CHECK(f.good(), ConfigError, "write_ggq_tables: cannot open " + path);
  f << "axem-ggq-v1\n"
    << "p " << t.p << "\n"
    << "clearance " << buf << "\n"
    << "begin\n"
    << payload << "end\n";
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(payload));
  f << "checksum " << buf << "\n";
  AXEM_CHECK(f.good(), ConfigError, "write_ggq_tables: write failed");
}

GGQTables read_ggq_tables(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  AXEM_CHECK(f.good(), ConfigError, "read_ggq_tables: cannot open " + path);
  std::string line;
  auto fail = [&path](const std::string& what) {
    return ConfigError("read_ggq_tables: " + what + " in " + path);
  };

  GGQTables t;
  std::getline(f, line);
  if (line != "axem-ggq-v1") throw fail("bad magic");
  std::string key;
  f >> key >> t.p;
  if (key != "p" || t.p < 4 || t.p > 64) throw fail("bad order line");
  std::string clear_str;
  f >> key >> clear_str;
  if (key != "clearance") throw fail("bad clearance line");
  t.adjacent_clearance = std::strtod(clear_str.c_str(), nullptr);
  f >> key;
  if (key != "begin") throw fail("missing begin");

  t.self_rules.resize(t.p);
  for (int n = 0; n < t.p; ++n) {
    int idx = -1, count = 0;
    f >> key >> idx >> count;
    if (key != "self" || idx != n || count <= 0 || count > 4096)
      throw fail("bad self-rule header");
    if (!parse_rule(f, count, t.self_rules[n])) throw fail("bad rule data");
  }
  int count = 0;
  f >> key >> count;
  if (key != "adjacent" || count <= 0 || count > 4096)
    throw fail("bad adjacent header");
  if (!parse_rule(f, count, t.adjacent)) throw fail("bad rule data");
  f >> key;
  if (key != "end") throw fail("missing end");
  std::string sum;
  f >> key >> sum;
  if (key != "checksum") throw fail("missing checksum");

  char buf[64];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(tables_payload(t)));
  if (sum != buf) throw fail("checksum mismatch");
  t.provenance = "file:" + sum;
  return t;
}

GGQTables load_or_build_ggq(int p, const std::string& data_dir) {
  GGQTables t;
  bool loaded = false;
  if (!data_dir.empty()) {
    const std::string path =
        data_dir + "/ggq_p" + std::to_string(p) + "_v1.txt";
    if (std::ifstream(path).good()) {
      t = read_ggq_tables(path);
      AXEM_CHECK(t.p == p, ConfigError,
                 "load_or_build_ggq: table order mismatch");
      loaded = true;
    }
  }
  if (!loaded) t = build_ggq_tables(p);
  const double resid = ggq_max_residual(t);
  AXEM_CHECK(resid <= 1e-13, NumericalError,
             "load_or_build_ggq: quadrature tables fail verification");
  return t;
}

LegendreTransform make_legendre_transform(int p) {
  LegendreTransform lt;
  lt.p = p;
  lt.u = legendre_nodal_to_coeff(gauss_legendre(p));
  return lt;
}

// ===========================================================================
// Media

cplx Media::k0() const { return {omega * std::sqrt(eps0 * mu0), 0.0}; }

cplx Media::k1() const {
  cplx k = omega * std::sqrt(eps1 * mu1);
  if (k.imag() < 0.0) k = -k;
  return k;
}

void Media::validate() const {
  AXEM_CHECK(omega > 0.0, ConfigError, "media: omega must be positive");
  AXEM_CHECK(eps0 > 0.0 && mu0 > 0.0, ConfigError,
             "media: exterior constants must be positive");
  AXEM_CHECK(eps1.real() > 0.0 && eps1.imag() >= 0.0, ConfigError,
             "media: interior permittivity must have Re > 0, Im >= 0");
  AXEM_CHECK(mu1.real() > 0.0 && mu1.imag() >= 0.0, ConfigError,
             "media: interior permeability must have Re > 0, Im >= 0");
}

Media Media::from_wavenumbers(double k0, cplx k1) {
  AXEM_CHECK(k0 > 0.0, ConfigError, "media: exterior wavenumber must be > 0");
  Media m;
  m.omega = k0;
  const cplx ratio = k1 / k0;
  m.eps1 = ratio * ratio;
  m.validate();
  return m;
}

// ===========================================================================
// Panel relations, support batches and the pair sweep

PanelRelation classify_panels(const Mesh& mesh, int target_panel,
                              int source_panel) {
  if (target_panel == source_panel) return PanelRelation::self;
  if (mesh.right_neighbor(source_panel) == target_panel)
    return PanelRelation::adjacent_high;
  if (mesh.left_neighbor(source_panel) == target_panel)
    return PanelRelation::adjacent_low;
  return PanelRelation::far;
}

namespace {

/// Off-grid support points on a source panel together with the contraction
/// back to the panel's p nodal values: the ds-measure weight of point q going
/// into nodal column k is wq[q] * lam[q*p + k].
struct SupportBatch {
  std::vector<double> t;        // curve parameter of each support point
  std::vector<CurveFrame> f;
  std::vector<double> wq;       // half * rule weight * jacobian  (ds measure)
  std::vector<double> lam;      // nq x p Lagrange values at the rule nodes
};

void fill_batch(const Mesh& mesh, const LegendreTransform& lt, int panel,
                const std::vector<double>& y, const std::vector<double>& w,
                SupportBatch& b) {
  const int p = mesh.p;
  const int nq = static_cast<int>(y.size());
  const Panel& pan = mesh.panels[panel];
  const double half = 0.5 * (pan.t1 - pan.t0);
  const double mid = 0.5 * (pan.t0 + pan.t1);
  b.t.resize(nq);
  b.f.resize(nq);
  b.wq.resize(nq);
  b.lam.resize(size_t(nq) * p);
  std::vector<double> pv(p);
  for (int q = 0; q < nq; ++q) {
    b.t[q] = mid + half * y[q];
    b.f[q] = frame_at(*mesh.curve, b.t[q]);
    b.wq[q] = half * w[q] * b.f[q].jac;
    legendre_values(p - 1, y[q], pv.data());
    for (int k = 0; k < p; ++k) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += pv[j] * lt.u[size_t(j) * p + k];
      b.lam[size_t(q) * p + k] = s;
    }
  }
}

void build_self_batch(const Mesh& mesh, const GGQTables& tab,
                      const LegendreTransform& lt, int panel, int local_node,
                      SupportBatch& b) {
  const PanelRule& rule = tab.self_rules[local_node];
  fill_batch(mesh, lt, panel, rule.y, rule.w, b);
}

void build_adjacent_batch(const Mesh& mesh, const GGQTables& tab,
                          const LegendreTransform& lt, int panel,
                          bool high_end, SupportBatch& b) {
  if (high_end) {
    fill_batch(mesh, lt, panel, tab.adjacent.y, tab.adjacent.w, b);
    return;
  }
  std::vector<double> y(tab.adjacent.y.size());
  for (size_t q = 0; q < y.size(); ++q) y[q] = -tab.adjacent.y[q];
  fill_batch(mesh, lt, panel, y, tab.adjacent.w, b);
}

/// Distance (in source-panel half-width units) from the shared endpoint to
/// the target's parameter, accounting for closed-curve wrap-around.
double adjacent_gap(const Mesh& mesh, int source_panel, bool high_end,
                    double t_target) {
  const Panel& pan = mesh.panels[source_panel];
  const double half = 0.5 * (pan.t1 - pan.t0);
  const double t_end = high_end ? pan.t1 : pan.t0;
  double d = std::fabs(t_target - t_end);
  if (mesh.closed) {
    const double period = mesh.curve->t_end - mesh.curve->t_begin;
    d = std::min(d, period - d);
  }
  return d / half;
}

/// Drives one kernel sweep: for every ordered (target node, source support
/// point) pair it evaluates the modal kernel block and hands it to the
/// visitor, choosing far (nodal), self, or adjacent support points from the
/// panel relation.  Visitor interface:
///   begin_panel(sp); pair_far(tn, k, src, w_ds, blk);
///   pair_near(tn, src, w_ds, lam, blk); end_panel(sp);
template <class Visitor>
void sweep_pairs(const Mesh& mesh, const GGQTables& tab, cplx k0, cplx k1,
                 int m_eng, bool need_g, bool need_dg, bool need_d2,
                 Visitor& vis, AssemblyStats* stats) {
  AXEM_CHECK(mesh.p == tab.p, ConfigError,
             "sweep_pairs: mesh and table orders differ");
  AXEM_CHECK(mesh.n_panels() >= 3, ConfigError,
             "sweep_pairs: need at least three panels");
  const int p = mesh.p;
  const int n_nodes = mesh.n_nodes();
  const LegendreTransform lt = make_legendre_transform(p);

  ModalGreenWorkspace ws;
  ModalKernelBlock blk;
  SupportBatch self_batch, adj_batch[2];

  using clock = std::chrono::steady_clock;
  double t_kernel = 0.0, t_scatter = 0.0;
  std::int64_t n_far = 0, n_near = 0;

  auto eval_pair = [&](const MeshNode& tgt, const CurveFrame& src) {
    const auto t0 = clock::now();
    const PairGeometry pg =
        make_pair_geometry(tgt.f.r, tgt.f.z, src.r, src.z);
    PairKernelEngine eng(pg, k0, k1, m_eng, ws, KernelPath::automatic, need_g,
                         need_dg, need_d2);
    eng.emit(false, blk);
    t_kernel += std::chrono::duration<double>(clock::now() - t0).count();
    if (eng.used_far())
      ++n_far;
    else
      ++n_near;
  };

  for (int sp = 0; sp < mesh.n_panels(); ++sp) {
    vis.begin_panel(sp);
    const int first = mesh.panels[sp].first_node;
    bool have_adj[2] = {false, false};
    for (int tn = 0; tn < n_nodes; ++tn) {
      const MeshNode& tgt = mesh.nodes[tn];
      const PanelRelation rel = classify_panels(mesh, tgt.panel, sp);
      if (rel == PanelRelation::far) {
        for (int k = 0; k < p; ++k) {
          const MeshNode& srcn = mesh.nodes[first + k];
          eval_pair(tgt, srcn.f);
          const auto t1 = clock::now();
          vis.pair_far(tn, k, srcn.f, srcn.ws, blk);
          t_scatter +=
              std::chrono::duration<double>(clock::now() - t1).count();
        }
      } else if (rel == PanelRelation::self) {
        build_self_batch(mesh, tab, lt, sp, tn - first, self_batch);
        for (size_t q = 0; q < self_batch.t.size(); ++q) {
          eval_pair(tgt, self_batch.f[q]);
          const auto t1 = clock::now();
          vis.pair_near(tn, self_batch.f[q], self_batch.wq[q],
                        &self_batch.lam[q * p], blk);
          t_scatter +=
              std::chrono::duration<double>(clock::now() - t1).count();
        }
      } else {
        const int side = rel == PanelRelation::adjacent_high ? 1 : 0;
        if (!have_adj[side]) {
          build_adjacent_batch(mesh, tab, lt, sp, side == 1, adj_batch[side]);
          have_adj[side] = true;
        }
        const double gap = adjacent_gap(mesh, sp, side == 1, tgt.t);
        AXEM_CHECK(gap >= 0.999 * tab.adjacent_clearance, NumericalError,
                   "sweep_pairs: neighbor target too close for the graded "
                   "adjacent rule");
        const SupportBatch& b = adj_batch[side];
        for (size_t q = 0; q < b.t.size(); ++q) {
          eval_pair(tgt, b.f[q]);
          const auto t1 = clock::now();
          vis.pair_near(tn, b.f[q], b.wq[q], &b.lam[q * p], blk);
          t_scatter +=
              std::chrono::duration<double>(clock::now() - t1).count();
        }
      }
    }
    vis.end_panel(sp);
  }
  if (stats) {
    stats->t_kernel += t_kernel;
    stats->t_scatter += t_scatter;
    stats->n_pairs_far += n_far;
    stats->n_pairs_near += n_near;
  }
}

// ===========================================================================
// Modal operator combinations
//
// Shifted-mode helpers acting on arrays that are even in m (the odd
// combination of an even array is odd in m automatically).

inline cplx comb_even(const std::vector<cplx>& x, int m) {
  return 0.5 * (ModalKernelBlock::even_at(x, m + 1) +
                ModalKernelBlock::even_at(x, m - 1));
}
inline cplx comb_odd(const std::vector<cplx>& x, int m) {
  return cplx(0.0, -0.5) * (ModalKernelBlock::even_at(x, m + 1) -
                            ModalKernelBlock::even_at(x, m - 1));
}

/// 2x2 operator blocks for one pair and mode: rows are the (t, theta)
/// components at the target, columns the (J1, J2) density components at the
/// source.  n_op[w] is the weakly singular single-wavenumber operator
/// (curl of the single layer, tangential part); kd is the difference of the
/// double-curl operators at the two wavenumbers, whose hypersingular parts
/// cancel and whose second-derivative content comes from the difference
/// arrays of the kernel block.
struct PairCombos {
  cplx n_op[2][2][2];
  cplx kd[2][2];
};

void operator_combos(const ModalKernelBlock& blk, const CurveFrame& tf,
                     const CurveFrame& sf, int m, const cplx k2[2],
                     bool same_k, PairCombos& out) {
  const double R = sf.r, A = sf.tr, B = sf.tz;
  const double rt = tf.r, At = tf.tr, Bt = tf.tz;
  const cplx im = cplx(0.0, double(m));
  const double md = double(m);
  const double rt2 = rt * rt;

  cplx kpart[2][2][2];
  for (int w = 0; w < 2; ++w) {
    const cplx g1 = ModalKernelBlock::even_at(blk.g1[w], m);
    const cplx g2 = ModalKernelBlock::even_at(blk.g2[w], m);
    // The stored odd combinations equal i times the sine-weighted modal
    // kernels; convert here so the operator formulas below can carry their
    // literal prefixes.
    const cplx g3 = -iu * ModalKernelBlock::odd_at(blk.g3[w], m);
    const cplx dg1r = ModalKernelBlock::even_at(blk.dg_dr[w], m);
    const cplx dg1z = ModalKernelBlock::even_at(blk.dg_dz[w], m);
    const cplx dg2r = comb_even(blk.dg_dr[w], m);
    const cplx dg3r = -iu * comb_odd(blk.dg_dr[w], m);
    const cplx dg2z = comb_even(blk.dg_dz[w], m);
    const cplx dg3z = -iu * comb_odd(blk.dg_dz[w], m);

    out.n_op[w][0][0] = R * A * dg2z - R * B * dg1r;
    out.n_op[w][0][1] = -iu * R * dg3z;
    // The theta-row combinations below come out oriented opposite to the
    // azimuthal direction used by the identity pairing and the boundary
    // data, so they are negated to put every row in one frame.
    out.n_op[w][1][0] =
        -((Bt / rt) * (iu * R * A * g3 + rt * iu * R * A * dg3r -
                       im * R * A * g2) +
          At * ((im / rt) * R * B * g1 - iu * R * A * dg3z));
    out.n_op[w][1][1] =
        -((Bt / rt) * (R * g2 + rt * R * dg2r - md * R * g3) - At * R * dg2z);

    if (same_k) continue;
    kpart[w][0][0] = k2[w] * (iu * R * A * g3) + (im / rt2) * (R * A * g2) +
                     (im / rt) * (R * A * dg2r) -
                     (md * md / rt2) * (iu * R * A * g3) +
                     (im / rt) * (R * B * dg1z);
    kpart[w][0][1] = k2[w] * (R * g2) + (im / rt2) * (-iu * R * g3) +
                     (im / rt) * (-iu * R * dg3r) -
                     (md * md / rt2) * (R * g2);
    kpart[w][1][0] =
        k2[w] * (Bt * R * B * g1 + At * R * A * g2) +
        Bt * ((1.0 / rt) * (R * A * dg2z) + (im / rt) * (iu * R * A * dg3z)) +
        At * (-(1.0 / rt2) * (R * A * g2) + (1.0 / rt) * (R * A * dg2r) -
              (im / rt2) * (iu * R * A * g3) + (im / rt) * (iu * R * A * dg3r));
    kpart[w][1][1] =
        k2[w] * (At * (-iu * R * g3)) +
        Bt * ((1.0 / rt) * (-iu * R * dg3z) + (im / rt) * (R * dg2z)) +
        At * (-(1.0 / rt2) * (-iu * R * g3) + (1.0 / rt) * (-iu * R * dg3r) -
              (im / rt2) * (R * g2) + (im / rt) * (R * dg2r));
  }

  if (same_k) {
    out.kd[0][0] = out.kd[0][1] = out.kd[1][0] = out.kd[1][1] = cplx(0.0);
    return;
  }
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) out.kd[r][c] = kpart[0][r][c] - kpart[1][r][c];

  const cplx d2g1rz = ModalKernelBlock::even_at(blk.d2_rz, m);
  const cplx d2g1zz = ModalKernelBlock::even_at(blk.d2_zz, m);
  const cplx d2g2rr = comb_even(blk.d2_rr, m);
  const cplx d2g2rz = comb_even(blk.d2_rz, m);
  const cplx d2g3rr = -iu * comb_odd(blk.d2_rr, m);
  const cplx d2g3rz = -iu * comb_odd(blk.d2_rz, m);
  out.kd[1][0] += Bt * (R * A * d2g2rz + R * B * d2g1zz) +
                  At * (R * A * d2g2rr + R * B * d2g1rz);
  out.kd[1][1] += Bt * (-iu * R * d2g3rz) + At * (-iu * R * d2g3rr);
  // Same frame alignment as for the single-curl rows above.
  out.kd[1][0] = -out.kd[1][0];
  out.kd[1][1] = -out.kd[1][1];
}

/// Coefficients combining the operator blocks into the four-block
/// transmission matrix; rows (E_t, E_theta, H_t, H_theta), columns
/// (J1, J2, M1, M2).
struct TransmissionCoeffs {
  cplx k_j, k_m;        // wavenumber-difference operator into (E,J), (H,M)
  cplx n0_em, n1_em;    // per-wavenumber operator into (E,M)
  cplx n0_hj, n1_hj;    // per-wavenumber operator into (H,J)
  cplx id_e, id_h;      // identity terms on (E,M) and (H,J)
};

TransmissionCoeffs transmission_coeffs(Formulation form, const Media& md) {
  const cplx jw = iu * md.omega;
  TransmissionCoeffs c;
  if (form == Formulation::direct) {
    c.k_j = 1.0;
    c.k_m = -1.0;
    c.n0_em = -jw * md.eps0;
    c.n1_em = jw * md.eps1;
    c.n0_hj = -jw * md.mu0;
    c.n1_hj = jw * md.mu1;
    c.id_e = 0.5 * jw * (md.eps0 + md.eps1);
    c.id_h = 0.5 * jw * (md.mu0 + md.mu1);
  } else {
    c.k_j = md.mu0 / md.eps0;
    c.k_m = -md.eps0 / md.mu0;
    c.n0_em = -jw * md.mu0;
    c.n1_em = jw * md.mu1;
    c.n0_hj = -jw * md.eps0;
    c.n1_hj = jw * md.eps1;
    c.id_e = -0.5 * jw * (md.mu0 + md.mu1);
    c.id_h = -0.5 * jw * (md.eps0 + md.eps1);
  }
  return c;
}

// ===========================================================================
// Matrix-assembly visitor

class MatrixVisitor {
 public:
  MatrixVisitor(const Mesh& mesh, const Media& media, Formulation form,
                const std::vector<int>& modes, ModeMatrixStore& store)
      : mesh_(mesh),
        modes_(modes),
        store_(store),
        p_(mesh.p),
        n_nodes_(mesh.n_nodes()),
        n4_(4 * mesh.n_nodes()),
        coeffs_(transmission_coeffs(form, media)),
        same_k_(media.k0() == media.k1()) {
    k2_[0] = media.k0() * media.k0();
    k2_[1] = media.k1() * media.k1();
    scale_.resize(n_nodes_);
    for (int i = 0; i < n_nodes_; ++i)
      scale_[i] = std::sqrt(mesh.nodes[i].ws);
    strips_.resize(modes.size());
    for (auto& s : strips_) s.assign(size_t(n4_) * 4 * p_, cplx(0.0));
  }

  void begin_panel(int sp) {
    first_ = mesh_.panels[sp].first_node;
    for (auto& s : strips_) std::fill(s.begin(), s.end(), cplx(0.0));
  }

  void pair_far(int tn, int k, const CurveFrame& src, double w_ds,
                const ModalKernelBlock& blk) {
    scatter(tn, src, blk, nullptr, k, w_ds);
  }
  void pair_near(int tn, const CurveFrame& src, double w_ds,
                 const double* lam, const ModalKernelBlock& blk) {
    scatter(tn, src, blk, lam, -1, w_ds);
  }

  void end_panel(int) {
    // Identity terms on the panel's own diagonal entries; the symmetric
    // weighting leaves them unscaled.
    for (size_t mi = 0; mi < modes_.size(); ++mi) {
      cplx* s = strips_[mi].data();
      for (int k = 0; k < p_; ++k) {
        const int j = first_ + k;
        s[size_t(2 * p_ + k) * n4_ + j] += coeffs_.id_e;               // E_t,M1
        s[size_t(3 * p_ + k) * n4_ + (n_nodes_ + j)] += coeffs_.id_e;  // E_th,M2
        s[size_t(0 * p_ + k) * n4_ + (2 * n_nodes_ + j)] += coeffs_.id_h;
        s[size_t(1 * p_ + k) * n4_ + (3 * n_nodes_ + j)] += coeffs_.id_h;
      }
    }
    for (size_t mi = 0; mi < modes_.size(); ++mi)
      for (int b = 0; b < 4; ++b)
        store_.write_column_run(static_cast<int>(mi), b * n_nodes_ + first_,
                                p_, strips_[mi].data() + size_t(b) * p_ * n4_);
  }

 private:
  void scatter(int tn, const CurveFrame& src, const ModalKernelBlock& blk,
               const double* lam, int k_single, double w_ds) {
    const CurveFrame& tf = mesh_.nodes[tn].f;
    const double srow = scale_[tn];
    PairCombos pc;
    for (size_t mi = 0; mi < modes_.size(); ++mi) {
      operator_combos(blk, tf, src, modes_[mi], k2_, same_k_, pc);
      cplx ej[2][2], em[2][2], hj[2][2], hm[2][2];
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          ej[r][c] = coeffs_.k_j * pc.kd[r][c];
          hm[r][c] = coeffs_.k_m * pc.kd[r][c];
          em[r][c] =
              coeffs_.n0_em * pc.n_op[0][r][c] + coeffs_.n1_em * pc.n_op[1][r][c];
          hj[r][c] =
              coeffs_.n0_hj * pc.n_op[0][r][c] + coeffs_.n1_hj * pc.n_op[1][r][c];
        }
      cplx* s = strips_[mi].data();
      auto put = [&](int k, double cw) {
        const size_t cj1 = size_t(k) * n4_;
        const size_t cj2 = size_t(p_ + k) * n4_;
        const size_t cm1 = size_t(2 * p_ + k) * n4_;
        const size_t cm2 = size_t(3 * p_ + k) * n4_;
        const int r0 = tn, r1 = n_nodes_ + tn, r2 = 2 * n_nodes_ + tn,
                  r3 = 3 * n_nodes_ + tn;
        s[cj1 + r0] += cw * ej[0][0];
        s[cj1 + r1] += cw * ej[1][0];
        s[cj1 + r2] += cw * hj[0][0];
        s[cj1 + r3] += cw * hj[1][0];
        s[cj2 + r0] += cw * ej[0][1];
        s[cj2 + r1] += cw * ej[1][1];
        s[cj2 + r2] += cw * hj[0][1];
        s[cj2 + r3] += cw * hj[1][1];
        s[cm1 + r0] += cw * em[0][0];
        s[cm1 + r1] += cw * em[1][0];
        s[cm1 + r2] += cw * hm[0][0];
        s[cm1 + r3] += cw * hm[1][0];
        s[cm2 + r0] += cw * em[0][1];
        s[cm2 + r1] += cw * em[1][1];
        s[cm2 + r2] += cw * hm[0][1];
        s[cm2 + r3] += cw * hm[1][1];
      };
      if (k_single >= 0) {
        put(k_single, w_ds * srow / scale_[first_ + k_single]);
      } else {
        for (int k = 0; k < p_; ++k) {
          const double cw = w_ds * lam[k] * srow / scale_[first_ + k];
          put(k, cw);
        }
      }
    }
  }

  const Mesh& mesh_;
  std::vector<int> modes_;
  ModeMatrixStore& store_;
  int p_, n_nodes_, n4_, first_ = 0;
  TransmissionCoeffs coeffs_;
  bool same_k_;
  cplx k2_[2];
  std::vector<double> scale_;
  std::vector<std::vector<cplx>> strips_;
};

// ===========================================================================
// Coefficient-block visitor (verification interface)

class CBlockVisitor {
 public:
  CBlockVisitor(const Mesh& mesh, int m, CDerivOrder order)
      : mesh_(mesh), m_(m), order_(order), p_(mesh.p),
        n_(mesh.n_nodes()) {
    const int nq = order == CDerivOrder::value     ? 3
                   : order == CDerivOrder::first   ? 6
                                                   : 9;
    out_.n = n_;
    out_.mats.resize(nq);
    for (auto& mat : out_.mats)
      mat.assign(size_t(n_) * 2 * n_, cplx(0.0));
  }

  void begin_panel(int sp) { first_ = mesh_.panels[sp].first_node; }
  void end_panel(int) {}

  void pair_far(int tn, int k, const CurveFrame& src, double w_ds,
                const ModalKernelBlock& blk) {
    scatter(tn, src, blk, nullptr, k, w_ds);
  }
  void pair_near(int tn, const CurveFrame& src, double w_ds,
                 const double* lam, const ModalKernelBlock& blk) {
    scatter(tn, src, blk, lam, -1, w_ds);
  }

  CBlockMatrices take() { return std::move(out_); }

 private:
  void scatter(int tn, const CurveFrame& src, const ModalKernelBlock& blk,
               const double* lam, int k_single, double w_ds) {
    const double R = src.r, A = src.tr, B = src.tz;
    cplx v1[9], v2[9];
    int nq = 0;
    if (order_ == CDerivOrder::value) {
      const cplx g1 = ModalKernelBlock::even_at(blk.g1[0], m_);
      const cplx g2 = ModalKernelBlock::even_at(blk.g2[0], m_);
      const cplx g3 = ModalKernelBlock::odd_at(blk.g3[0], m_);
      v1[0] = R * A * g2;       v2[0] = -iu * R * g3;
      v1[1] = iu * R * A * g3;  v2[1] = R * g2;
      v1[2] = R * B * g1;       v2[2] = cplx(0.0);
      nq = 3;
    } else if (order_ == CDerivOrder::first) {
      const cplx d1[2] = {ModalKernelBlock::even_at(blk.dg_dr[0], m_),
                          ModalKernelBlock::even_at(blk.dg_dz[0], m_)};
      const cplx d2[2] = {comb_even(blk.dg_dr[0], m_),
                          comb_even(blk.dg_dz[0], m_)};
      const cplx d3[2] = {comb_odd(blk.dg_dr[0], m_),
                          comb_odd(blk.dg_dz[0], m_)};
      for (int a = 0; a < 2; ++a) {
        v1[a] = R * A * d2[a];      v2[a] = -iu * R * d3[a];
        v1[2 + a] = iu * R * A * d3[a];  v2[2 + a] = R * d2[a];
        v1[4 + a] = R * B * d1[a];  v2[4 + a] = cplx(0.0);
      }
      nq = 6;
    } else {
      const std::vector<cplx>* d2arr[3] = {&blk.d2_rr, &blk.d2_rz, &blk.d2_zz};
      for (int a = 0; a < 3; ++a) {
        const cplx e1 = ModalKernelBlock::even_at(*d2arr[a], m_);
        const cplx e2 = comb_even(*d2arr[a], m_);
        const cplx e3 = comb_odd(*d2arr[a], m_);
        v1[a] = R * A * e2;      v2[a] = -iu * R * e3;
        v1[3 + a] = iu * R * A * e3;  v2[3 + a] = R * e2;
        v1[6 + a] = R * B * e1;  v2[6 + a] = cplx(0.0);
      }
      nq = 9;
    }

    auto put = [&](int k, double cw) {
      const size_t row = size_t(tn) * 2 * n_;
      for (int q = 0; q < nq; ++q) {
        out_.mats[q][row + first_ + k] += cw * v1[q];
        out_.mats[q][row + n_ + first_ + k] += cw * v2[q];
      }
    };
    if (k_single >= 0) {
      put(k_single, w_ds);
    } else {
      for (int k = 0; k < p_; ++k) put(k, w_ds * lam[k]);
    }
  }

  const Mesh& mesh_;
  int m_;
  CDerivOrder order_;
  int p_, n_, first_ = 0;
  CBlockMatrices out_;
};

}  // namespace

CBlockMatrices assemble_c_blocks(const Mesh& mesh, cplx k0, cplx k1, int m,
                                 CDerivOrder order, const GGQTables& tables) {
  CBlockVisitor vis(mesh, m, order);
  const bool need_g = order == CDerivOrder::value;
  const bool need_dg = order == CDerivOrder::first;
  const bool need_d2 = order == CDerivOrder::second_difference;
  // Single-wavenumber quantities ignore k1; evaluate with k1 = k0 so the
  // engine can share its transforms.
  const cplx k1_eff = need_d2 ? k1 : k0;
  sweep_pairs(mesh, tables, k0, k1_eff, std::abs(m), need_g, need_dg, need_d2,
              vis, nullptr);
  return vis.take();
}

void assemble_mode_matrices(Formulation form, const Mesh& mesh,
                            const Media& media, const std::vector<int>& modes,
                            const GGQTables& tables, ModeMatrixStore& store,
                            AssemblyStats* stats) {
  media.validate();
  AXEM_CHECK(!modes.empty(), ConfigError, "assemble: empty mode list");
  AXEM_CHECK(store.n() == 4 * mesh.n_nodes() &&
                 store.n_modes() == static_cast<int>(modes.size()),
             ConfigError, "assemble: store dimensions mismatch");
  int m_eng = 0;
  for (int m : modes) m_eng = std::max(m_eng, std::abs(m));
  const cplx k0 = media.k0(), k1 = media.k1();
  MatrixVisitor vis(mesh, media, form, modes, store);
  sweep_pairs(mesh, tables, k0, k1, m_eng, true, true, !(k0 == k1), vis,
              stats);
}

ModalSystem make_modal_system(int m, int n, std::vector<cplx> a,
                              std::vector<double> scale) {
  AXEM_CHECK(a.size() == size_t(n) * n && scale.size() == size_t(n),
             ConfigError, "make_modal_system: dimension mismatch");
  ModalSystem sys;
  sys.m = m;
  sys.n = n;
  sys.a = std::move(a);
  sys.scale = std::move(scale);
  return sys;
}

std::vector<double> l2_scale_vector(const Mesh& mesh) {
  const int n = mesh.n_nodes();
  std::vector<double> s(size_t(4) * n);
  for (int i = 0; i < n; ++i) {
    const double v = std::sqrt(mesh.nodes[i].ws);
    for (int b = 0; b < 4; ++b) s[size_t(b) * n + i] = v;
  }
  return s;
}

ModalSystem assemble_mode_matrix(Formulation form, const Mesh& mesh,
                                 const Media& media, int m,
                                 const GGQTables& tables) {
  const int n4 = 4 * mesh.n_nodes();
  ModeMatrixStore store(n4, 1, std::numeric_limits<std::size_t>::max());
  assemble_mode_matrices(form, mesh, media, {m}, tables, store);
  std::vector<cplx> a;
  store.fetch(0, a);
  return make_modal_system(m, n4, std::move(a), l2_scale_vector(mesh));
}

// ===========================================================================
// Factorization and solves

void factorize(ModalSystem& sys) {
  AXEM_CHECK(!sys.factorized, ConfigError, "factorize: already factorized");
  AXEM_CHECK(sys.a.size() == size_t(sys.n) * sys.n, ConfigError,
             "factorize: bad matrix size");
  double anorm = 0.0;
  for (int j = 0; j < sys.n; ++j) {
    double col = 0.0;
    for (int i = 0; i < sys.n; ++i) col += std::abs(sys.a[size_t(j) * sys.n + i]);
    anorm = std::max(anorm, col);
  }
  sys.anorm1 = anorm;
  sys.ipiv.resize(sys.n);
  const lapack_int info = LAPACKE_zgetrf(
      LAPACK_COL_MAJOR, sys.n, sys.n,
      reinterpret_cast<lapack_complex_double*>(sys.a.data()), sys.n,
      sys.ipiv.data());
  AXEM_CHECK(info == 0, NumericalError,
             "factorize: LU factorization reported a singular pivot");
  sys.factorized = true;
}

std::vector<cplx> solve(const ModalSystem& sys, const std::vector<cplx>& rhs) {
  AXEM_CHECK(sys.factorized, ConfigError, "solve: factorize first");
  AXEM_CHECK(rhs.size() == size_t(sys.n), ConfigError, "solve: bad rhs size");
  std::vector<cplx> x(rhs);
  for (int i = 0; i < sys.n; ++i) x[i] *= sys.scale[i];
  const lapack_int info = LAPACKE_zgetrs(
      LAPACK_COL_MAJOR, 'N', sys.n, 1,
      reinterpret_cast<const lapack_complex_double*>(sys.a.data()), sys.n,
      sys.ipiv.data(), reinterpret_cast<lapack_complex_double*>(x.data()),
      sys.n);
  AXEM_CHECK(info == 0, NumericalError, "solve: triangular solve failed");
  for (int i = 0; i < sys.n; ++i) x[i] /= sys.scale[i];
  return x;
}

double condition_estimate(const ModalSystem& sys) {
  AXEM_CHECK(sys.factorized, ConfigError,
             "condition_estimate: factorize first");
  double rcond = 0.0;
  const lapack_int info = LAPACKE_zgecon(
      LAPACK_COL_MAJOR, '1', sys.n,
      reinterpret_cast<const lapack_complex_double*>(sys.a.data()), sys.n,
      sys.anorm1, &rcond);
  AXEM_CHECK(info == 0, NumericalError, "condition_estimate: zgecon failed");
  if (rcond <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / rcond;
}

// ===========================================================================
// Mode matrix store

ModeMatrixStore::ModeMatrixStore(int n, int n_modes,
                                 std::size_t ram_limit_bytes,
                                 std::string scratch_dir)
    : n_(n), n_modes_(n_modes) {
  AXEM_CHECK(n > 0 && n_modes > 0, ConfigError, "store: bad dimensions");
  const std::size_t bytes =
      sizeof(cplx) * std::size_t(n) * n * std::size_t(n_modes);
  on_disk_ = bytes > ram_limit_bytes;
  if (!on_disk_) {
    ram_.resize(n_modes);
    for (auto& m : ram_) m.assign(std::size_t(n) * n, cplx(0.0));
    return;
  }
  if (scratch_dir.empty()) {
    const char* tmp = std::getenv("TMPDIR");
    scratch_dir = tmp && *tmp ? tmp : "/tmp";
  }
  fds_.resize(n_modes, -1);
  for (int i = 0; i < n_modes; ++i) {
    std::string tmpl = scratch_dir + "/axem_mode_XXXXXX";
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    const int fd = ::mkstemp(buf.data());
    AXEM_CHECK(fd >= 0, ConfigError,
               "store: cannot create scratch file in " + scratch_dir);
    ::unlink(buf.data());
    AXEM_CHECK(::ftruncate(fd, static_cast<off_t>(sizeof(cplx)) * n * n) == 0,
               ConfigError, "store: cannot size scratch file");
    fds_[i] = fd;
  }
}

ModeMatrixStore::~ModeMatrixStore() {
  for (int fd : fds_)
    if (fd >= 0) ::close(fd);
}

void ModeMatrixStore::write_column_run(int mode_idx, int first_col, int ncols,
                                       const cplx* data) {
  AXEM_CHECK(mode_idx >= 0 && mode_idx < n_modes_ && first_col >= 0 &&
                 first_col + ncols <= n_,
             ConfigError, "store: bad column run");
  const std::size_t count = std::size_t(ncols) * n_;
  if (!on_disk_) {
    std::memcpy(ram_[mode_idx].data() + std::size_t(first_col) * n_, data,
                count * sizeof(cplx));
    return;
  }
  const char* src = reinterpret_cast<const char*>(data);
  std::size_t left = count * sizeof(cplx);
  off_t off = static_cast<off_t>(sizeof(cplx)) * first_col * n_;
  while (left > 0) {
    const ssize_t wr = ::pwrite(fds_[mode_idx], src, left, off);
    AXEM_CHECK(wr > 0, ConfigError, "store: scratch write failed");
    src += wr;
    off += wr;
    left -= static_cast<std::size_t>(wr);
  }
}

void ModeMatrixStore::fetch(int mode_idx, std::vector<cplx>& out) const {
  AXEM_CHECK(mode_idx >= 0 && mode_idx < n_modes_, ConfigError,
             "store: bad mode index");
  out.resize(std::size_t(n_) * n_);
  if (!on_disk_) {
    std::copy(ram_[mode_idx].begin(), ram_[mode_idx].end(), out.begin());
    return;
  }
  char* dst = reinterpret_cast<char*>(out.data());
  std::size_t left = out.size() * sizeof(cplx);
  off_t off = 0;
  while (left > 0) {
    const ssize_t rd = ::pread(fds_[mode_idx], dst, left, off);
    AXEM_CHECK(rd > 0, ConfigError, "store: scratch read failed");
    dst += rd;
    off += rd;
    left -= static_cast<std::size_t>(rd);
  }
}

void ModeMatrixStore::release(int mode_idx) {
  AXEM_CHECK(mode_idx >= 0 && mode_idx < n_modes_, ConfigError,
             "store: bad mode index");
  if (!on_disk_) {
    ram_[mode_idx].clear();
    ram_[mode_idx].shrink_to_fit();
    return;
  }
  AXEM_CHECK(::ftruncate(fds_[mode_idx], 0) == 0, ConfigError,
             "store: scratch release failed");
}

// ===========================================================================
// Generic quadrature rows

std::vector<cplx> quadrature_row(const Mesh& mesh, const GGQTables& tables,
                                 int target_node, int source_panel,
                                 const PointKernel& ker) {
  AXEM_CHECK(target_node >= 0 && target_node < mesh.n_nodes() &&
                 source_panel >= 0 && source_panel < mesh.n_panels(),
             ConfigError, "quadrature_row: index out of range");
  const int p = mesh.p;
  const MeshNode& tgt = mesh.nodes[target_node];
  const int first = mesh.panels[source_panel].first_node;
  std::vector<cplx> row(p, cplx(0.0));
  const PanelRelation rel =
      classify_panels(mesh, tgt.panel, source_panel);
  if (rel == PanelRelation::far) {
    for (int k = 0; k < p; ++k) {
      const MeshNode& s = mesh.nodes[first + k];
      row[k] = s.ws * ker(tgt, s.f);
    }
    return row;
  }
  const LegendreTransform lt = make_legendre_transform(p);
  SupportBatch b;
  if (rel == PanelRelation::self) {
    build_self_batch(mesh, tables, lt, source_panel, target_node - first, b);
  } else {
    const bool high = rel == PanelRelation::adjacent_high;
    const double gap = adjacent_gap(mesh, source_panel, high, tgt.t);
    AXEM_CHECK(gap >= 0.999 * tables.adjacent_clearance, NumericalError,
               "quadrature_row: target too close for the adjacent rule");
    build_adjacent_batch(mesh, tables, lt, source_panel, high, b);
  }
  for (size_t q = 0; q < b.t.size(); ++q) {
    const cplx kv = ker(tgt, b.f[q]);
    for (int k = 0; k < p; ++k) row[k] += b.wq[q] * b.lam[q * p + k] * kv;
  }
  return row;
}

}  // namespace axem
