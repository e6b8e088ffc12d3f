#include "axem/modalgreen.hpp"

#include <algorithm>
#include <cmath>

#include "axem/fft.hpp"

namespace axem {

namespace {

constexpr double kTailEps = 1e-12;  // coefficient-decay threshold
constexpr int kSearchLen0 = 64;     // first trial transform length
constexpr int kSearchLenCap = 16384;

// Entire factors of the kernel splitting, stable for every rho > 0.  For
// |k rho| < 1e-3 the cancellation-prone combinations switch to truncated
// Taylor series (through order (k rho)^11).
inline cplx sinc_k(cplx k, double rho) {  // sin(k rho)/rho
  cplx x = k * rho;
  if (std::abs(x) < 1e-3) {
    cplx w = x * x;
    return k * (1.0 + w * (-1.0 / 6 + w * (1.0 / 120 + w * (-1.0 / 5040 +
                w * (1.0 / 362880)))));
  }
  return std::sin(x) / rho;
}

inline cplx u3_fun(cplx k, double rho) {  // (k rho cos(k rho) - sin(k rho))/rho^3
  cplx x = k * rho;
  // The direct formula cancels two O(x) terms to reach an O(x^3) result, so
  // its relative error grows like 3 eps / |x|^2; switch to the series while
  // that error and the series truncation error are both at roundoff level.
  if (std::abs(x) < 0.75) {
    cplx w = x * x;
    return k * k * k *
           (-1.0 / 3 + w * (1.0 / 30 + w * (-1.0 / 840 + w * (1.0 / 45360 +
            w * (-1.0 / 3991680 + w * (1.0 / 518918400 +
            w * (-1.0 / 93405312000)))))));
  }
  return (x * std::cos(x) - std::sin(x)) / (rho * rho * rho);
}

struct TailScan {
  double gmax = 0.0;
  int n_decay = 0;   // smallest N with |coeff| <= eps*gmax for all n > N
  bool decayed = false;
};

// Scans the symmetric coefficients (already normalized) of a length-L
// transform.  half = L/2 rounded down.
TailScan scan_tail(const cplx* coef, int L) {
  TailScan ts;
  int half = L / 2;
  std::vector<double> mag(half + 1);
  for (int n = 0; n <= half; ++n) {
    double a = std::abs(coef[n]);
    if (n > 0 && n < L - n) a = std::max(a, std::abs(coef[L - n]));
    mag[n] = a;
    ts.gmax = std::max(ts.gmax, a);
  }
  double thresh = kTailEps * ts.gmax;
  int n = half;
  while (n > 0 && mag[n] <= thresh) --n;
  ts.n_decay = n;
  // Decayed only if the top octave sits below threshold.
  ts.decayed = true;
  for (int j = std::max(1, half - half / 4); j <= half; ++j)
    if (mag[j] > thresh) ts.decayed = false;
  return ts;
}

}  // namespace

PairGeometry make_pair_geometry(double r_t, double z_t, double r_s,
                                double z_s) {
  AXEM_CHECK(r_t > 0.0 && r_s > 0.0, NumericalError,
             "modal kernel pair requires positive radii");
  double zd = z_t - z_s;
  double d2 = (r_t - r_s) * (r_t - r_s) + zd * zd;
  double m1 = d2 / (2.0 * r_t * r_s);
  AXEM_CHECK(m1 > 0.0, NumericalError,
             "modal kernel pair is coincident (rho_min = 0)");
  PairGeometry pg;
  pg.r_t = r_t;
  pg.z_t = z_t;
  pg.r_s = r_s;
  pg.z_s = z_s;
  pg.chi = make_chi(m1);
  pg.rho_min = std::sqrt(d2);
  return pg;
}

bool pair_is_far(const PairGeometry& pg) {
  return pg.rho_min >= 0.2 * std::max(pg.r_t, pg.r_s) || pg.chi.v >= 2.0;
}

const std::vector<double>& ModalGreenWorkspace::sin2_half(int len) {
  auto it = sin2_tables_.find(len);
  if (it != sin2_tables_.end()) return it->second;
  std::vector<double> t(len);
  for (int j = 0; j < len; ++j) {
    double s = std::sin(pi * j / len);
    t[j] = s * s;
  }
  return sin2_tables_.emplace(len, std::move(t)).first->second;
}

const std::vector<double>& ModalGreenWorkspace::cosine(int len) {
  auto it = cos_tables_.find(len);
  if (it != cos_tables_.end()) return it->second;
  std::vector<double> t(len);
  for (int j = 0; j < len; ++j) t[j] = std::cos(2.0 * pi * j / len);
  return cos_tables_.emplace(len, std::move(t)).first->second;
}

void derive_g23(const std::vector<cplx>& x_ext, std::vector<cplx>& even_out,
                std::vector<cplx>& odd_out) {
  AXEM_CHECK(x_ext.size() >= 2, NumericalError,
             "derive_g23 needs at least two modes");
  size_t n_out = x_ext.size() - 1;
  even_out.resize(n_out);
  odd_out.resize(n_out);
  const cplx half_over_i = cplx(0.0, -0.5);  // 1/(2i)
  for (size_t m = 0; m < n_out; ++m) {
    cplx plus = x_ext[m + 1];
    cplx minus = x_ext[m == 0 ? 1 : m - 1];
    even_out[m] = 0.5 * (plus + minus);
    odd_out[m] = half_over_i * (plus - minus);
  }
}

PairKernelEngine::PairKernelEngine(const PairGeometry& pg, cplx k0, cplx k1,
                                   int M, ModalGreenWorkspace& ws,
                                   KernelPath path, bool need_g, bool need_dg,
                                   bool need_d2)
    : pg_(pg),
      M_(M),
      Mg_(M + 1),
      Ms_(M + 3),
      need_g_(need_g),
      need_dg_(need_dg),
      need_d2_(need_d2) {
  AXEM_CHECK(M >= 0, NumericalError, "negative mode bandwidth");
  k_[0] = k0;
  k_[1] = k1;
  same_k_ = (k0 == k1);
  far_ = (path == KernelPath::automatic) ? pair_is_far(pg)
                                         : (path == KernelPath::far);
  (far_ ? ws.n_far : ws.n_near) += 1;

  // --- truncation search: probe the slowest-decaying integrand --------------
  const double zd = pg_.z_t - pg_.z_s;
  const double rr4 = 4.0 * pg_.r_t * pg_.r_s;
  const double rm2 = pg_.rho_min * pg_.rho_min;
  cplx kp = (std::abs(k0) >= std::abs(k1)) ? k0 : k1;
  (void)zd;
  int L = kSearchLen0;
  bool found = false;
  while (true) {
    auto& s2 = ws.sin2_half(L);
    ws.fft_buf.resize(L);
    for (int j = 0; j < L; ++j) {
      double rho = std::sqrt(rm2 + rr4 * s2[j]);
      if (far_) {
        ws.fft_buf[j] = std::exp(iu * kp * rho) / (4.0 * pi * rho);
      } else {
        ws.fft_buf[j] = std::cos(kp * rho);
      }
    }
    fft_forward(ws.fft_buf.data(), L);
    double inv = 1.0 / L;
    for (auto& c : ws.fft_buf) c *= inv;
    ws.n_fft_points += L;
    TailScan ts = scan_tail(ws.fft_buf.data(), L);
    if (ts.decayed) {
      n_trunc_ = ts.n_decay;
      found = true;
      break;
    }
    if (L >= kSearchLenCap) break;
    L *= 2;
  }
  AXEM_CHECK(found, NumericalError,
             "kernel coefficients did not decay below tolerance within the "
             "transform-length cap");
  // Margin, then (near route) enough coefficients that a product with the
  // singular sequences keeps every emitted mode accurate relative to itself.
  n_trunc_ += 8 + n_trunc_ / 8;
  if (!far_) n_trunc_ = std::max(n_trunc_, 2 * Ms_ + 8);
  n_trunc_ = std::max(n_trunc_, Ms_ + 2);

  for (int attempt = 0;; ++attempt) {
    m_q_ = Ms_ + n_trunc_;
    AXEM_CHECK(2 * m_q_ + 1 <= 2 * kSearchLenCap + 1 && attempt < 4,
               NumericalError,
               "kernel coefficients did not decay below tolerance within the "
               "transform-length cap");
    if (sample_and_verify(ws)) break;
    n_trunc_ = 2 * n_trunc_;
  }

  if (!far_) {
    // singular sequences, shared by every kernel of this pair
    auto qseq = legendre_q_half_seq(pg_.chi, m_q_);
    double srt = std::sqrt(pg_.r_t * pg_.r_s);
    double sq = 1.0 / (2.0 * pi * srt);
    double sp = 1.0 / (4.0 * pi * std::pow(2.0 * pg_.r_t * pg_.r_s, 1.5));
    double sh = 1.0 / (8.0 * pi * pg_.r_t * pg_.r_s);
    bool want_p = need_dg_ || need_d2_;
    bool want_h = need_d2_ && !same_k_;
    PowerSeqs st;
    if (want_p || want_h) st = power_seqs(pg_.chi, qseq, m_q_);
    qhat_.resize(m_q_ + 1);
    for (int m = 0; m <= m_q_; ++m) qhat_[m] = sq * qseq[m];
    if (want_p) {
      phat_.resize(m_q_ + 1);
      for (int m = 0; m <= m_q_; ++m) phat_[m] = sp * st.S[m];
    }
    if (want_h) {
      hhat_.resize(m_q_ + 1);
      for (int m = 0; m <= m_q_; ++m) hhat_[m] = sh * st.T[m];
    }
    convolve_all();
  }
}

// Samples every required integrand on the odd production grid of length
// 2 m_q_ + 1, transforms, folds to symmetric coefficients, and verifies that
// the coefficient tails really decay below tolerance.  Returns false when the
// truncation must be enlarged.
bool PairKernelEngine::sample_and_verify(ModalGreenWorkspace& ws) {
  const int L = 2 * m_q_ + 1;
  auto& s2 = ws.sin2_half(L);
  const double zd = pg_.z_t - pg_.z_s;
  (void)zd;
  const double rr4 = 4.0 * pg_.r_t * pg_.r_s;
  const double rm2 = pg_.rho_min * pg_.rho_min;
  const cplx sig = 0.5 * (k_[0] + k_[1]);
  const cplx del = 0.5 * (k_[0] - k_[1]);
  const bool want_d1 = need_d2_ && !same_k_;
  const int nw = same_k_ ? 1 : 2;

  // sample buffers: near 0..2 per w = u1,u2,u3 and 6 = d1;
  // far: 0 = A(k), 1 = B(k) per w stored at indices w and 2+w, 4 = Wdel, 5 = Wuv
  int nbuf = far_ ? 6 : 7;
  for (int b = 0; b < nbuf; ++b) ws.samp[b].assign(L, cplx(0.0));

  for (int j = 0; j < L; ++j) {
    double rho = std::sqrt(rm2 + rr4 * s2[j]);
    cplx u1[2], u2[2], u3[2];
    for (int w = 0; w < nw; ++w) {
      cplx x = k_[w] * rho;
      u1[w] = std::cos(x);
      u2[w] = sinc_k(k_[w], rho);
      u3[w] = u3_fun(k_[w], rho);
    }
    if (same_k_) {
      u1[1] = u1[0];
      u2[1] = u2[0];
      u3[1] = u3[0];
    }
    cplx d1 = 0.0;
    if (want_d1) d1 = -2.0 * sinc_k(sig, rho) * sinc_k(del, rho);
    if (!far_) {
      for (int w = 0; w < nw; ++w) {
        ws.samp[3 * w + 0][j] = u1[w];
        ws.samp[3 * w + 1][j] = u2[w];
        ws.samp[3 * w + 2][j] = u3[w];
      }
      ws.samp[6][j] = d1;
    } else {
      double ir = 1.0 / rho;
      double ir2 = ir * ir;
      double ir3 = ir2 * ir;
      double c4 = 1.0 / (4.0 * pi);
      for (int w = 0; w < nw; ++w) {
        ws.samp[w][j] = c4 * (u1[w] * ir + iu * u2[w]);
        ws.samp[2 + w][j] =
            c4 * (-k_[w] * u2[w] * ir - u1[w] * ir3 + iu * u3[w]);
      }
      if (want_d1) {
        ws.samp[4][j] = c4 * (iu * (u3[0] - u3[1]) -
                              (k_[0] * u2[0] - k_[1] * u2[1]) * ir - d1 * ir);
        ws.samp[5][j] =
            c4 * ((-k_[0] * k_[0] * u1[0] + 3.0 * k_[0] * u2[0] +
                   k_[1] * k_[1] * u1[1] - 3.0 * k_[1] * u2[1] + 3.0 * d1) *
                      ir3 +
                  iu * (-k_[0] * k_[0] * u2[0] - 3.0 * u3[0] +
                        k_[1] * k_[1] * u2[1] + 3.0 * u3[1]) *
                      ir2);
      }
    }
  }

  // Which buffers are actually consumed?
  std::vector<int> used;
  if (!far_) {
    for (int w = 0; w < nw; ++w) {
      used.push_back(3 * w + 0);
      used.push_back(3 * w + 1);
      if (need_dg_ || need_d2_) used.push_back(3 * w + 2);
    }
    if (want_d1) used.push_back(6);
  } else {
    for (int w = 0; w < nw; ++w) {
      if (need_g_) used.push_back(w);
      if (need_dg_) used.push_back(2 + w);
    }
    if (want_d1) {
      used.push_back(4);
      used.push_back(5);
    }
  }

  // Transform, verify the tail, fold.
  double inv = 1.0 / L;
  int keep = far_ ? Ms_ : n_trunc_;
  std::vector<std::vector<cplx>> folded(nbuf);
  for (int b : used) {
    fft_forward(ws.samp[b].data(), L);
    ws.n_fft_points += L;
    double gmax = 0.0, tail = 0.0;
    for (int n = 0; n <= m_q_; ++n) {
      double a = std::max(std::abs(ws.samp[b][n]),
                          n > 0 ? std::abs(ws.samp[b][L - n]) : 0.0) *
                 inv;
      gmax = std::max(gmax, a);
      if (n > n_trunc_) tail = std::max(tail, a);
    }
    if (gmax > 0.0 && tail > kTailEps * gmax) return false;
    auto& f = folded[b];
    f.resize(keep + 1);
    f[0] = ws.samp[b][0] * inv;
    for (int n = 1; n <= keep; ++n)
      f[n] = 0.5 * inv * (ws.samp[b][n] + ws.samp[b][L - n]);
  }

  if (!far_) {
    for (int w = 0; w < nw; ++w) {
      u1h_[w] = std::move(folded[3 * w + 0]);
      u2h_[w] = std::move(folded[3 * w + 1]);
      u3h_[w] = std::move(folded[3 * w + 2]);
    }
    if (same_k_) {
      u1h_[1] = u1h_[0];
      u2h_[1] = u2h_[0];
      u3h_[1] = u3h_[0];
    }
    if (want_d1) d1h_ = std::move(folded[6]);
  } else {
    for (int w = 0; w < nw; ++w) {
      a_[w] = std::move(folded[w]);
      b_[w] = std::move(folded[2 + w]);
    }
    if (same_k_) {
      a_[1] = a_[0];
      b_[1] = b_[0];
    }
    if (want_d1) {
      wdel_ = std::move(folded[4]);
      wuv_ = std::move(folded[5]);
    }
  }
  return true;
}

namespace {
// out[m] = sum_{|n| <= N} u[n] s[|m-n|] for m = 0..outM, with u even in n.
std::vector<cplx> conv_even(const std::vector<cplx>& u,
                            const std::vector<double>& s, int N, int outM) {
  std::vector<cplx> out(outM + 1);
  for (int m = 0; m <= outM; ++m) {
    cplx acc = u[0] * s[m];
    for (int n = 1; n <= N; ++n)
      acc += u[n] * (s[std::abs(m - n)] + s[m + n]);
    out[m] = acc;
  }
  return out;
}
}  // namespace

void PairKernelEngine::convolve_all() {
  const int N = n_trunc_;
  const bool want_d1 = need_d2_ && !same_k_;
  const int nw = same_k_ ? 1 : 2;
  std::vector<cplx> tmp(N + 1);
  for (int w = 0; w < nw; ++w) {
    if (need_g_) cq1_[w] = conv_even(u1h_[w], qhat_, N, Ms_);
    if (need_dg_ || need_d2_) {
      cq2_[w] = conv_even(u2h_[w], qhat_, N, Ms_);
      cp1_[w] = conv_even(u1h_[w], phat_, N, Ms_);
    }
    if (need_d2_ && !same_k_) {
      cplx k = k_[w];
      cplx k2 = k * k;
      // p-route combination (-k^2 u1 + 3k u2) reuses cp1 and one extra conv
      auto cp2 = conv_even(u2h_[w], phat_, N, Ms_);
      cpd_[w].resize(Ms_ + 1);
      for (int m = 0; m <= Ms_; ++m)
        cpd_[w][m] = -k2 * cp1_[w][m] + 3.0 * k * cp2[m];
      // h-route combination (-k^2 u2 - 3 u3)
      for (int n = 0; n <= N; ++n)
        tmp[n] = -k2 * u2h_[w][n] - 3.0 * u3h_[w][n];
      ch_[w] = conv_even(tmp, hhat_, N, Ms_);
    }
  }
  if (same_k_) {
    if (need_g_) cq1_[1] = cq1_[0];
    if (need_dg_ || need_d2_) {
      cq2_[1] = cq2_[0];
      cp1_[1] = cp1_[0];
    }
  }
  if (want_d1) {
    dq_ = conv_even(d1h_, qhat_, N, Ms_);
    dp_ = conv_even(d1h_, phat_, N, Ms_);
  }
}

void PairKernelEngine::emit(bool swapped, ModalKernelBlock& out) const {
  out.M = M_;
  out.Mg = Mg_;
  const double rt = swapped ? pg_.r_s : pg_.r_t;
  const double rs = swapped ? pg_.r_t : pg_.r_s;
  const double zd = (swapped ? -1.0 : 1.0) * (pg_.z_t - pg_.z_s);
  // stencil taps: multiply-by-(rt - rs cos phi) and its square, acting on
  // even coefficient arrays
  const double c0 = rt * rt + 0.5 * rs * rs;
  const double c1 = -rt * rs;
  const double c2 = 0.25 * rs * rs;
  auto at = [](const std::vector<cplx>& a, int m) {
    return a[static_cast<size_t>(m < 0 ? -m : m)];
  };
  auto stR = [&](const std::vector<cplx>& a, int m) {
    return rt * at(a, m) - 0.5 * rs * (at(a, m - 1) + at(a, m + 1));
  };
  auto stRR = [&](const std::vector<cplx>& a, int m) {
    return c0 * at(a, m) + c1 * (at(a, m - 1) + at(a, m + 1)) +
           c2 * (at(a, m - 2) + at(a, m + 2));
  };

  if (need_g_) {
    std::vector<cplx> g1e(Mg_ + 2);
    for (int w = 0; w < 2; ++w) {
      const auto& base = far_ ? a_[w] : cq1_[w];
      for (int m = 0; m <= Mg_ + 1; ++m) {
        cplx v = far_ ? 2.0 * pi * base[m]
                      : base[m] + 0.5 * iu * u2h_[w][m];
        g1e[m] = v;
      }
      out.g1[w].assign(g1e.begin(), g1e.begin() + Mg_ + 1);
      derive_g23(g1e, out.g2[w], out.g3[w]);
    }
  }

  if (need_dg_) {
    for (int w = 0; w < 2; ++w) {
      out.dg_dr[w].resize(Mg_ + 1);
      out.dg_dz[w].resize(Mg_ + 1);
      // radial derivative combination: the integrand is u_a(phi) times this
      std::vector<cplx> dgc(Mg_ + 2);
      for (int m = 0; m <= Mg_ + 1; ++m) {
        dgc[m] = far_ ? 2.0 * pi * b_[w][m]
                      : 0.5 * iu * u3h_[w][m] - k_[w] * cq2_[w][m] -
                            cp1_[w][m];
      }
      for (int m = 0; m <= Mg_; ++m) {
        out.dg_dr[w][m] = stR(dgc, m);
        out.dg_dz[w][m] = zd * dgc[m];
      }
    }
  }

  if (need_d2_) {
    out.d2_rr.assign(Mg_ + 1, cplx(0.0));
    out.d2_rz.assign(Mg_ + 1, cplx(0.0));
    out.d2_zz.assign(Mg_ + 1, cplx(0.0));
    if (!same_k_) {
      // fdel: delta_ab part;  fuv: u_a u_b part (both already differenced)
      std::vector<cplx> fdel(Ms_ + 1), fuv(Ms_ + 1);
      for (int m = 0; m <= Ms_; ++m) {
        if (far_) {
          fdel[m] = 2.0 * pi * wdel_[m];
          fuv[m] = 2.0 * pi * wuv_[m];
        } else {
          cplx e0 = 0.5 * iu * u3h_[0][m] - k_[0] * cq2_[0][m];
          cplx e1 = 0.5 * iu * u3h_[1][m] - k_[1] * cq2_[1][m];
          fdel[m] = e0 - e1 - dq_[m];
          cplx v0 = iu * ch_[0][m] + cpd_[0][m];
          cplx v1 = iu * ch_[1][m] + cpd_[1][m];
          fuv[m] = v0 - v1 + 3.0 * dp_[m];
        }
      }
      for (int m = 0; m <= Mg_; ++m) {
        out.d2_rr[m] = fdel[m] + stRR(fuv, m);
        out.d2_rz[m] = zd * stR(fuv, m);
        out.d2_zz[m] = fdel[m] + zd * zd * fuv[m];
      }
    }
  }
}

std::vector<cplx> eval_g1(const PairGeometry& pg, cplx k, int M,
                          ModalGreenWorkspace& ws, KernelPath path) {
  PairKernelEngine eng(pg, k, k, M, ws, path, true, false, false);
  ModalKernelBlock blk;
  eng.emit(false, blk);
  return blk.g1[0];
}

void eval_dg1(const PairGeometry& pg, cplx k, int M, ModalGreenWorkspace& ws,
              std::vector<cplx>& dg_dr, std::vector<cplx>& dg_dz,
              KernelPath path) {
  PairKernelEngine eng(pg, k, k, M, ws, path, false, true, false);
  ModalKernelBlock blk;
  eng.emit(false, blk);
  dg_dr = std::move(blk.dg_dr[0]);
  dg_dz = std::move(blk.dg_dz[0]);
}

void eval_d2g1_diff(const PairGeometry& pg, cplx k0, cplx k1, int M,
                    ModalGreenWorkspace& ws, std::vector<cplx>& d2_rr,
                    std::vector<cplx>& d2_rz, std::vector<cplx>& d2_zz,
                    KernelPath path) {
  PairKernelEngine eng(pg, k0, k1, M, ws, path, false, false, true);
  ModalKernelBlock blk;
  eng.emit(false, blk);
  d2_rr = std::move(blk.d2_rr);
  d2_rz = std::move(blk.d2_rz);
  d2_zz = std::move(blk.d2_zz);
}

}  // namespace axem
