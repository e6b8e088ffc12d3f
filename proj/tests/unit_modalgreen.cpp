#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "axem/modalgreen.hpp"
#include "oracles.hpp"

using namespace axem;

namespace {

struct P {
  double rt, zt, rs, zs;
};

PairGeometry mk(const P& p) {
  return make_pair_geometry(p.rt, p.zt, p.rs, p.zs);
}
oracle::ModalPair op(const P& p) { return {p.rt, p.zt, p.rs, p.zs}; }

// near-singular, moderate, and far configurations
const P kNear{1.05, 0.1, 1.0, 0.0};        // chi ~ 1.006, splitting route
const P kMid{1.15, 0.12, 1.0, 0.0};        // chi ~ 1.016, splitting route
const P kEdge{1.1, 0.2, 1.0, 0.0};         // chi ~ 1.023, just past the switch
const P kFar{2.0, 1.0, 0.5, -0.5};         // chi = 3.25, smooth route
const P kTiny{0.01, 0.3, 0.02, 0.0};       // small radii, chi ~ 226
const P kTouch{1.0, 1e-3, 1.0, 0.0};       // chi - 1 = 5e-7

double max_scale(const std::vector<cplx>& v) {
  double s = 0.0;
  for (auto& c : v) s = std::max(s, std::abs(c));
  return s;
}

}  // namespace

TEST_CASE("g1 matches the defining integral across regimes") {
  ModalGreenWorkspace ws;
  const int M = 12;
  for (const P& p : {kNear, kMid, kEdge, kFar, kTiny}) {
    for (cplx k : {cplx(0.0), cplx(1.0), cplx(5.0), cplx(2.0, 0.5)}) {
      auto g1 = eval_g1(mk(p), k, M, ws);
      REQUIRE(g1.size() == size_t(M + 2));
      std::vector<oracle::CValue> ref(M + 2);
      double scale = 0.0;
      for (int m = 0; m <= M + 1; ++m) {
        ref[m] = oracle::modal_g1(op(p), k, m);
        scale = std::max(scale, std::abs(ref[m].v));
      }
      for (int m = 0; m <= M + 1; ++m) {
        double tol =
            1e-10 * std::abs(ref[m].v) + 10.0 * ref[m].err + 1e-13 * scale;
        CHECK(std::abs(g1[m] - ref[m].v) <= tol);
      }
    }
  }
}

TEST_CASE("g1 at an almost-touching pair") {
  ModalGreenWorkspace ws;
  const int M = 10;
  for (cplx k : {cplx(1.0), cplx(5.0)}) {
    auto g1 = eval_g1(mk(kTouch), k, M, ws);
    double scale = 0.0;
    std::vector<oracle::CValue> ref(M + 1);
    for (int m = 0; m <= M; ++m) {
      ref[m] = oracle::modal_g1(op(kTouch), k, m);
      scale = std::max(scale, std::abs(ref[m].v));
    }
    for (int m = 0; m <= M; ++m) {
      double tol =
          1e-9 * std::abs(ref[m].v) + 30.0 * ref[m].err + 1e-12 * scale;
      CHECK(std::abs(g1[m] - ref[m].v) <= tol);
    }
  }
}

TEST_CASE("k = 0 reduces to the pure Legendre-Q sequence") {
  ModalGreenWorkspace ws;
  for (const P& p : {kNear, kTouch}) {
    auto pg = mk(p);
    const int M = 19;
    auto g1 = eval_g1(pg, 0.0, M, ws, KernelPath::near);
    auto q = legendre_q_half_seq(pg.chi, M + 1);
    double s = 1.0 / (2.0 * pi * std::sqrt(pg.r_t * pg.r_s));
    for (int m = 0; m <= M + 1; ++m) {
      double qm = s * q[m];
      CHECK(std::abs(g1[m] - qm) <= 1e-12 * std::abs(qm) + 1e-14 * s * q[0]);
    }
  }
}

TEST_CASE("shifted-mode combinations and parity bookkeeping") {
  // derive_g23 on a known sequence; odd part vanishes at m = 0 exactly.
  std::vector<cplx> x = {cplx(1, 1), cplx(2, -1), cplx(0.5, 3), cplx(-1, 0.25)};
  std::vector<cplx> e, o;
  derive_g23(x, e, o);
  REQUIRE(e.size() == 3);
  CHECK(o[0] == cplx(0.0));
  CHECK(e[0] == 0.5 * (x[1] + x[1]));
  CHECK(e[1] == 0.5 * (x[2] + x[0]));
  CHECK(o[2] == (x[3] - x[1]) / (2.0 * iu));

  // g2 equals the cos(phi)-weighted defining integral.
  ModalGreenWorkspace ws;
  auto pg = mk(kMid);
  cplx k = 5.0;
  PairKernelEngine eng(pg, k, k, 6, ws);
  ModalKernelBlock blk;
  eng.emit(false, blk);
  for (int m = 0; m <= 6; ++m) {
    auto ref = integrate_adaptive(
        [&](double phi) -> cplx {
          double rho = oracle::modal_rho(op(kMid), phi);
          return std::cos(m * phi) * std::cos(phi) *
                 std::exp(iu * k * rho) / (4.0 * pi * rho);
        },
        0.0, pi, 1e-13, 1e-300, 200000);
    CHECK(std::abs(blk.g2[0][m] - 2.0 * ref.value) <=
          1e-10 * std::abs(ref.value) + 10.0 * ref.error + 1e-14);
  }
}

TEST_CASE("first derivatives match the defining integrals") {
  ModalGreenWorkspace ws;
  const int M = 10;
  for (const P& p : {kNear, kMid, kFar}) {
    for (cplx k : {cplx(1.0), cplx(5.0)}) {
      std::vector<cplx> dgr, dgz;
      eval_dg1(mk(p), k, M, ws, dgr, dgz);
      REQUIRE(dgr.size() == size_t(M + 2));
      for (bool wrt_r : {true, false}) {
        auto& impl = wrt_r ? dgr : dgz;
        std::vector<oracle::CValue> ref(M + 2);
        double scale = 0.0;
        for (int m = 0; m <= M + 1; ++m) {
          ref[m] = oracle::modal_dg1(op(p), k, m, wrt_r);
          scale = std::max(scale, std::abs(ref[m].v));
        }
        for (int m = 0; m <= M + 1; ++m) {
          double tol =
              1e-9 * std::abs(ref[m].v) + 10.0 * ref[m].err + 1e-12 * scale;
          CHECK(std::abs(impl[m] - ref[m].v) <= tol);
        }
      }
    }
  }
}

TEST_CASE("k = 0 radial derivative agrees with the Legendre-Q chain rule") {
  ModalGreenWorkspace ws;
  for (const P& p : {kNear, kMid}) {
    auto pg = mk(p);
    const int M = 8;
    std::vector<cplx> dgr, dgz;
    eval_dg1(pg, 0.0, M, ws, dgr, dgz, KernelPath::near);
    auto q = legendre_q_half_seq(pg.chi, M + 2);
    double chi = pg.chi.v;
    double dchi_drt = 1.0 / pg.r_s - chi / pg.r_t;
    double s = 1.0 / (2.0 * pi * std::sqrt(pg.r_t * pg.r_s));
    for (int m = 0; m <= M; ++m) {
      // (chi^2-1) Q'_nu = nu (chi Q_nu - Q_{nu-1});  Q_{-3/2} = Q_{1/2}
      double nu = m - 0.5;
      double qm1 = (m == 0) ? q[1] : q[m - 1];
      double dq = nu * (chi * q[m] - qm1) / (chi * chi - 1.0);
      double ref = s * (dq * dchi_drt - 0.5 * q[m] / pg.r_t);
      CHECK(std::abs(dgr[m] - ref) <= 1e-10 * std::abs(ref) + 1e-13 * s * q[0]);
    }
  }
}

TEST_CASE("radial derivative agrees with Richardson finite differences") {
  ModalGreenWorkspace ws;
  const int M = 8;
  for (const P& p : {kNear, kFar}) {
    cplx k = 5.0;
    std::vector<cplx> dgr, dgz;
    eval_dg1(mk(p), k, M, ws, dgr, dgz);
    double scale = std::max(max_scale(dgr), max_scale(dgz));
    const double h = 1e-5;
    auto diff_r = [&](double step) {
      auto gp = eval_g1(make_pair_geometry(p.rt + step, p.zt, p.rs, p.zs), k,
                        M, ws);
      auto gm = eval_g1(make_pair_geometry(p.rt - step, p.zt, p.rs, p.zs), k,
                        M, ws);
      std::vector<cplx> d(M + 2);
      for (int m = 0; m <= M + 1; ++m) d[m] = (gp[m] - gm[m]) / (2.0 * step);
      return d;
    };
    auto d1 = diff_r(h), d2 = diff_r(0.5 * h);
    for (int m = 0; m <= M; ++m) {
      cplx rich = (4.0 * d2[m] - d1[m]) / 3.0;
      CHECK(std::abs(rich - dgr[m]) <= 1e-7 * scale);
    }
  }
}

TEST_CASE("axial derivative is odd under reflection of the target") {
  ModalGreenWorkspace ws;
  const int M = 6;
  const double d = 0.35;
  std::vector<cplx> dgr_p, dgz_p, dgr_m, dgz_m;
  eval_dg1(make_pair_geometry(1.2, d, 0.9, 0.0), 5.0, M, ws, dgr_p, dgz_p);
  eval_dg1(make_pair_geometry(1.2, -d, 0.9, 0.0), 5.0, M, ws, dgr_m, dgz_m);
  for (int m = 0; m <= M; ++m) {
    CHECK(std::abs(dgz_p[m] + dgz_m[m]) <= 1e-13 * max_scale(dgz_p));
    CHECK(std::abs(dgr_p[m] - dgr_m[m]) <= 1e-13 * max_scale(dgr_p));
  }
}

TEST_CASE("second-derivative differences match the defining integrals") {
  ModalGreenWorkspace ws;
  const int M = 8;
  struct KK {
    cplx k0, k1;
  };
  for (const P& p : {kNear, kMid, kFar}) {
    for (auto [k0, k1] : {KK{5.0, 2.5}, KK{10.0, 5.0}}) {
      std::vector<cplx> drr, drz, dzz;
      eval_d2g1_diff(mk(p), k0, k1, M, ws, drr, drz, dzz);
      const std::vector<cplx>* impl[3] = {&drr, &drz, &dzz};
      for (int ab = 0; ab < 3; ++ab) {
        std::vector<oracle::CValue> ref(M + 2);
        double scale = 0.0;
        for (int m = 0; m <= M + 1; ++m) {
          ref[m] = oracle::modal_d2diff(op(p), k0, k1, m, ab);
          scale = std::max(scale, std::abs(ref[m].v));
        }
        for (int m = 0; m <= M + 1; ++m) {
          double tol =
              1e-8 * std::abs(ref[m].v) + 10.0 * ref[m].err + 1e-11 * scale;
          CHECK(std::abs((*impl[ab])[m] - ref[m].v) <= tol);
        }
      }
    }
  }
}

TEST_CASE("second-derivative differences agree with differentiated firsts") {
  // Independent consistency: compare against Richardson finite differences of
  // the first-derivative arrays differenced across the two wavenumbers.
  ModalGreenWorkspace ws;
  const int M = 6;
  const P& p = kMid;
  cplx k0 = 5.0, k1 = 2.5;
  std::vector<cplx> drr, drz, dzz;
  eval_d2g1_diff(mk(p), k0, k1, M, ws, drr, drz, dzz);
  double scale =
      std::max({max_scale(drr), max_scale(drz), max_scale(dzz)});

  auto dg_diff = [&](double rt, double zt, bool wrt_r) {
    std::vector<cplx> a_r, a_z, b_r, b_z;
    eval_dg1(make_pair_geometry(rt, zt, p.rs, p.zs), k0, M, ws, a_r, a_z);
    eval_dg1(make_pair_geometry(rt, zt, p.rs, p.zs), k1, M, ws, b_r, b_z);
    std::vector<cplx> d(M + 1);
    for (int m = 0; m <= M; ++m)
      d[m] = wrt_r ? (a_r[m] - b_r[m]) : (a_z[m] - b_z[m]);
    return d;
  };
  const double h = 1e-4;
  auto fd = [&](bool in_r, bool of_r) {
    auto shift = [&](double step) {
      return dg_diff(p.rt + (in_r ? step : 0.0), p.zt + (in_r ? 0.0 : step),
                     of_r);
    };
    auto d1p = shift(h), d1m = shift(-h), d2p = shift(0.5 * h),
         d2m = shift(-0.5 * h);
    std::vector<cplx> out(M + 1);
    for (int m = 0; m <= M; ++m) {
      cplx c1 = (d1p[m] - d1m[m]) / (2.0 * h);
      cplx c2 = (d2p[m] - d2m[m]) / h;
      out[m] = (4.0 * c2 - c1) / 3.0;
    }
    return out;
  };
  auto fd_rr = fd(true, true), fd_rz = fd(false, true), fd_zz = fd(false, false);
  for (int m = 0; m <= M; ++m) {
    CHECK(std::abs(fd_rr[m] - drr[m]) <= 2e-6 * scale);
    CHECK(std::abs(fd_rz[m] - drz[m]) <= 2e-6 * scale);
    CHECK(std::abs(fd_zz[m] - dzz[m]) <= 2e-6 * scale);
  }
}

TEST_CASE("equal wavenumbers produce exactly zero differences") {
  ModalGreenWorkspace ws;
  std::vector<cplx> drr, drz, dzz;
  eval_d2g1_diff(mk(kNear), 5.0, 5.0, 6, ws, drr, drz, dzz);
  for (auto* a : {&drr, &drz, &dzz})
    for (auto& c : *a) CHECK(c == cplx(0.0));
}

TEST_CASE("far and near evaluation paths agree in the overlap band") {
  ModalGreenWorkspace ws;
  const int M = 10;
  // chi between 1.3 and 2.5: both routes are viable.
  const P band[] = {{1.0, 0.9, 1.1, 0.0}, {0.9, 1.3, 1.0, 0.0},
                    {1.0, 1.8, 1.05, 0.0}};
  for (const P& p : band) {
    auto pg = mk(p);
    for (cplx k0 : {cplx(1.0), cplx(5.0)}) {
      cplx k1 = 0.5 * k0;
      ModalKernelBlock a, b;
      PairKernelEngine(pg, k0, k1, M, ws, KernelPath::far).emit(false, a);
      PairKernelEngine(pg, k0, k1, M, ws, KernelPath::near).emit(false, b);
      for (int w = 0; w < 2; ++w) {
        double s1 = max_scale(a.g1[w]);
        double sd = std::max(max_scale(a.dg_dr[w]), max_scale(a.dg_dz[w]));
        for (int m = 0; m <= M; ++m) {
          CHECK(std::abs(a.g1[w][m] - b.g1[w][m]) <= 1e-11 * s1);
          CHECK(std::abs(a.dg_dr[w][m] - b.dg_dr[w][m]) <= 1e-11 * sd);
          CHECK(std::abs(a.dg_dz[w][m] - b.dg_dz[w][m]) <= 1e-11 * sd);
        }
      }
      double s2 = std::max({max_scale(a.d2_rr), max_scale(a.d2_rz),
                            max_scale(a.d2_zz)});
      for (int m = 0; m <= M; ++m) {
        CHECK(std::abs(a.d2_rr[m] - b.d2_rr[m]) <= 1e-11 * s2);
        CHECK(std::abs(a.d2_rz[m] - b.d2_rz[m]) <= 1e-11 * s2);
        CHECK(std::abs(a.d2_zz[m] - b.d2_zz[m]) <= 1e-11 * s2);
      }
    }
  }
}

TEST_CASE("swapped emission equals a freshly swapped pair") {
  ModalGreenWorkspace ws;
  const int M = 8;
  const P p = kMid;
  auto pg = mk(p);
  auto pg_swap = make_pair_geometry(p.rs, p.zs, p.rt, p.zt);
  PairKernelEngine eng(pg, 5.0, 2.5, M, ws);
  PairKernelEngine eng_swap(pg_swap, 5.0, 2.5, M, ws);
  ModalKernelBlock a, b;
  eng.emit(true, a);
  eng_swap.emit(false, b);
  for (int w = 0; w < 2; ++w) {
    for (int m = 0; m <= M + 1; ++m) {
      CHECK(a.g1[w][m] == b.g1[w][m]);
      CHECK(a.dg_dr[w][m] == b.dg_dr[w][m]);
      CHECK(a.dg_dz[w][m] == b.dg_dz[w][m]);
    }
  }
  for (int m = 0; m <= M + 1; ++m) {
    CHECK(a.d2_rr[m] == b.d2_rr[m]);
    CHECK(a.d2_rz[m] == b.d2_rz[m]);
    CHECK(a.d2_zz[m] == b.d2_zz[m]);
  }
}

TEST_CASE("forcing the smooth route on a nearly touching pair fails loudly") {
  ModalGreenWorkspace ws;
  auto pg = make_pair_geometry(1.0, 0.0, 1.0 + 1e-5, 0.0);
  CHECK_THROWS_AS(eval_g1(pg, 5.0, 8, ws, KernelPath::far), NumericalError);
}

TEST_CASE("path selection and bookkeeping") {
  CHECK(!pair_is_far(mk(kNear)));
  CHECK(!pair_is_far(mk(kMid)));
  CHECK(pair_is_far(mk(kEdge)));
  CHECK(pair_is_far(mk(kFar)));
  CHECK(pair_is_far(mk(kTiny)));
  CHECK(!pair_is_far(mk(kTouch)));
  ModalGreenWorkspace ws;
  PairKernelEngine eng(mk(kNear), 5.0, 2.5, 4, ws);
  CHECK(ws.n_near == 1);
  CHECK(ws.n_far == 0);
  CHECK(!eng.used_far());
  CHECK(eng.n_trunc() >= 2 * (4 + 3) + 8);
}
