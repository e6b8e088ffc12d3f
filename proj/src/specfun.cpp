#include "axem/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace axem {

namespace {

template <class T>
struct EllipticT {
  T K, E;
};

/// Arithmetic-geometric mean with a = 1.  b0 is the complementary modulus,
/// c0sq = 1 - b0^2 the squared modulus.  K = pi/(2*agm); the E/K ratio follows
/// from the accumulated sum of c_n^2.
template <class T>
EllipticT<T> agm_elliptic(T b0, T c0sq) {
  T a = 1.0, b = b0;
  T sum = T(0.5) * c0sq;  // the c_0^2/2 term, with c_0 = modulus
  T pow2 = 1.0;           // 2^{n-1} weight for the c_n term, n >= 1
  for (int n = 0; n < 64; ++n) {
    T c = T(0.5) * (a - b);  // c_{n+1}
    sum += pow2 * c * c;
    pow2 *= 2.0;
    T an = T(0.5) * (a + b);
    T bn = std::sqrt(a * b);
    a = an;
    b = bn;
    if (std::abs(a - b) <= std::numeric_limits<T>::epsilon() * a) break;
  }
  EllipticT<T> r;
  r.K = T(pi) / (T(2.0) * a);
  r.E = r.K * (T(1.0) - sum);
  return r;
}

/// Q_{-1/2}(chi) and Q_{1/2}(chi) from elliptic integrals, in extended
/// precision: forward-recurrence error growth amplifies any seed error by
/// exp(2 m arccosh(chi)), so the seeds carry spare digits.  The modulus is
/// k = sqrt(2/(chi+1)); its complement sqrt((chi-1)/(chi+1)) is formed from
/// chi-1 directly so nothing cancels as chi -> 1.
void q_half_seeds(const Chi& chi, long double* q0, long double* q1) {
  // Parameterize everything by chi-1: the seeds and any subsequent recurrence
  // must agree on chi to well below double rounding, or the inconsistency is
  // amplified exponentially along the recurrence.
  const long double vm1 = chi.m1;
  const long double vp1 = 2.0L + vm1;  // chi + 1
  const long double kc = std::sqrt(vm1 / vp1);
  const EllipticT<long double> ke = agm_elliptic<long double>(kc, 2.0L / vp1);
  *q0 = std::sqrt(2.0L / vp1) * ke.K;
  if (q1) *q1 = (1.0L + vm1) * (*q0) - std::sqrt(2.0L * vp1) * ke.E;
}

/// One backward (Miller) pass with start index M_q + margin.  Trial values at
/// the top are normalized against the Q_{-1/2} seed after running down; the
/// minimal solution dominates after ~margin steps.
void miller_pass(const Chi& chi, int M_q, int margin, double q0,
                 std::vector<double>& out) {
  out.assign(M_q + 1, 0.0);
  const int jhi = M_q + margin;
  double yp = 0.0;  // y_{j+1}
  double yc = 1.0;  // y_j
  for (int j = jhi; j >= 1; --j) {
    if (j <= M_q) out[j] = yc;
    const double ym =
        (4.0 * j * chi.v * yc - (2.0 * j + 1.0) * yp) / (2.0 * j - 1.0);
    yp = yc;
    yc = ym;
    if (std::abs(yc) > 1e250) {
      // Rescale to avoid overflow.  Entries already stored are smaller in
      // magnitude; rescaling them identically keeps the final normalization
      // by y_0 consistent (entries that underflow are genuinely negligible).
      const double s = 1e-250;
      yc *= s;
      yp *= s;
      for (int i = j; i <= M_q; ++i) out[i] *= s;
    }
  }
  const double scale = q0 / yc;
  out[0] = q0;
  for (int j = 1; j <= M_q; ++j) out[j] *= scale;
}

}  // namespace

EllipticKE complete_elliptic(double k_modulus) {
  if (!(k_modulus >= 0.0 && k_modulus < 1.0))
    throw std::domain_error("complete_elliptic: modulus must lie in [0,1)");
  const double kc = std::sqrt((1.0 - k_modulus) * (1.0 + k_modulus));
  auto r = agm_elliptic<double>(kc, k_modulus * k_modulus);
  return {r.K, r.E};
}

EllipticKE complete_elliptic_from_complement(double kc) {
  if (!(kc > 0.0 && kc <= 1.0))
    throw std::domain_error(
        "complete_elliptic_from_complement: complement must lie in (0,1]");
  auto r = agm_elliptic<double>(kc, (1.0 - kc) * (1.0 + kc));
  return {r.K, r.E};
}

std::vector<double> legendre_q_half_seq_forward(const Chi& chi, int M_q) {
  AXEM_CHECK(chi.m1 > 0.0, std::domain_error,
             "legendre_q_half_seq: chi must exceed 1");
  std::vector<double> q(M_q + 1);
  long double q0, q1;
  q_half_seeds(chi, &q0, &q1);
  // Extended precision throughout, with chi rebuilt from chi-1 exactly as in
  // the seeds: the recurrence amplifies any seed/argument inconsistency by
  // the ratio of the growing to the decaying solution.
  const long double chiv = 1.0L + (long double)chi.m1;
  long double ym = q0, yc = q1;
  q[0] = static_cast<double>(q0);
  if (M_q >= 1) q[1] = static_cast<double>(q1);
  for (int j = 2; j <= M_q; ++j) {
    const long double yn =
        (4.0L * (j - 1.0L) * chiv * yc - (2.0L * j - 3.0L) * ym) /
        (2.0L * j - 1.0L);
    ym = yc;
    yc = yn;
    q[j] = static_cast<double>(yn);
  }
  return q;
}

std::vector<double> legendre_q_half_seq_miller(const Chi& chi, int M_q) {
  AXEM_CHECK(chi.m1 > 0.0, std::domain_error,
             "legendre_q_half_seq: chi must exceed 1");
  long double q0l;
  q_half_seeds(chi, &q0l, nullptr);
  const double q0 = static_cast<double>(q0l);
  int margin = std::max(
      20, static_cast<int>(std::ceil(10.0 / std::sqrt(2.0 * chi.m1))));
  std::vector<double> q, prev;
  miller_pass(chi, M_q, margin, q0, q);
  for (int attempt = 0; attempt < 10; ++attempt) {
    prev = q;
    margin *= 2;
    miller_pass(chi, M_q, margin, q0, q);
    const double ref = std::abs(q[M_q]);
    // Two consecutive passes agree once the trial-seed contamination has
    // decayed; the comparison tolerance sits above the pass-to-pass roundoff
    // noise, which grows with the square root of the pass length.
    if (std::abs(q[M_q] - prev[M_q]) <= 1e-12 * ref) return q;
    if (ref == 0.0 && prev[M_q] == 0.0) return q;  // underflowed tail
  }
  throw NumericalError(
      "legendre_q_half_seq: backward recurrence failed to settle");
}

std::vector<double> legendre_q_half_seq(const Chi& chi, int M_q) {
  AXEM_CHECK(M_q >= 0, std::invalid_argument, "legendre_q_half_seq: M_q >= 0");
  // The two recurrence solutions separate like exp(2 M arccosh(chi)), with
  // arccosh(chi) ~ sqrt(2 (chi-1)) near 1.  The extended-precision forward
  // recurrence tolerates separation up to ~e^10 while staying well below
  // double roundoff, so route to it whenever 2 (chi-1) (M+1)^2 <= 25; the
  // backward (Miller) route then always enjoys fast contamination decay.
  const double delta = 12.5 / (double(M_q + 1) * double(M_q + 1));
  if (chi.m1 < delta) return legendre_q_half_seq_forward(chi, M_q);
  return legendre_q_half_seq_miller(chi, M_q);
}

PowerSeqs power_seqs(const Chi& chi, const std::vector<double>& q_half, int M) {
  AXEM_CHECK(static_cast<int>(q_half.size()) >= M + 1, std::invalid_argument,
             "power_seqs: need Q_{m-1/2} through m = M");
  PowerSeqs out;
  out.S.resize(M + 1);
  out.T.resize(M + 1);

  const double chisq_m1 = chi.m1 * (chi.v + 1.0);  // chi^2 - 1, cancellation-free
  const double root = std::sqrt(chisq_m1);

  // S_0 = 4 E(k) / ((chi-1) sqrt(chi+1)): closed form of -2 d/dchi of the
  // m = 0 inverse-square-root coefficient, valid without Q_{-3/2}.
  {
    const double kc = std::sqrt(chi.m1 / (chi.v + 1.0));
    const auto ke = agm_elliptic<double>(kc, 2.0 / (chi.v + 1.0));
    out.S[0] = 4.0 * ke.E / (chi.m1 * std::sqrt(chi.v + 1.0));
  }
  const double sqrt8 = std::sqrt(8.0);
  for (int m = 1; m <= M; ++m)
    out.S[m] = sqrt8 * (2.0 * m - 1.0) *
               (q_half[m - 1] - chi.v * q_half[m]) / chisq_m1;

  // T_m = T_0 * b^m with b = 1/(chi + sqrt(chi^2-1)): the decaying solution
  // of T_{m+1} = 2 chi T_m - T_{m-1} written in closed form, since the
  // recurrence run forward amplifies the growing solution exponentially.
  const double T0 = 2.0 * pi / root;
  const double b = 1.0 / (chi.v + root);
  double bm = 1.0;
  for (int m = 0; m <= M; ++m) {
    out.T[m] = T0 * bm;
    bm *= b;
  }
  return out;
}

}  // namespace axem
