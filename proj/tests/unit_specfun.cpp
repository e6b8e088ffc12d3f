#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/special_functions/ellint_1.hpp>
#include <boost/math/special_functions/ellint_2.hpp>
#include "axem/adaptive_quadrature.hpp"
#include <cmath>
#include <random>

#include "axem/specfun.hpp"
#include "oracles.hpp"

using namespace axem;

TEST_CASE("complete elliptic integrals match an independent implementation") {
  for (double k : {0.0, 1e-8, 0.1, 0.3, 0.5, 0.7071067811865476, 0.9, 0.99,
                   0.999999}) {
    auto r = complete_elliptic(k);
    double K = boost::math::ellint_1(k);
    double E = boost::math::ellint_2(k);
    CHECK(std::abs(r.K - K) <= 1e-14 * K);
    CHECK(std::abs(r.E - E) <= 1e-14 * E);
  }
  CHECK_THROWS_AS(complete_elliptic(1.0), std::domain_error);
  CHECK_THROWS_AS(complete_elliptic(-0.5), std::domain_error);
  CHECK_THROWS_AS(complete_elliptic(1.5), std::domain_error);
}

TEST_CASE("complement-parameterized elliptic integrals stay accurate near k=1") {
  // Moderate complement: oracle = defining integrals written in terms of the
  // complement, K = int dt / sqrt(cos^2 t + kc^2 sin^2 t), which stay
  // well-conditioned where the integrand peak (1/kc) is quadrature-resolvable.
  for (double kc : {1.0, 0.5, 1e-2, 1e-4}) {
    auto r = complete_elliptic_from_complement(kc);
    auto den = [kc](double t) {
      return std::sqrt(sq(std::cos(t)) + sq(kc * std::sin(t)));
    };
    auto K = integrate_adaptive_real([&](double t) { return 1.0 / den(t); },
                                     0.0, pi / 2, 1e-14, 1e-300, 100000);
    auto E = integrate_adaptive_real(den, 0.0, pi / 2, 1e-14, 1e-300, 100000);
    CHECK(std::abs(r.K - K.value.real()) <=
          1e-13 * K.value.real() + 10 * K.error);
    CHECK(std::abs(r.E - E.value.real()) <=
          1e-13 * E.value.real() + 10 * E.error);
  }
  // Extreme complement: oracle = logarithmic asymptotics, whose truncation
  // error is O(kc^4 log kc), far below double rounding here.
  for (double kc : {1e-6, 1e-9}) {
    auto r = complete_elliptic_from_complement(kc);
    double L = std::log(4.0 / kc);
    double Kref = L + 0.25 * kc * kc * (L - 1.0);
    double Eref = 1.0 + 0.5 * kc * kc * (L - 0.5);
    CHECK(std::abs(r.K - Kref) <= 1e-14 * Kref);
    CHECK(std::abs(r.E - Eref) <= 1e-14 * Eref);
  }
}

TEST_CASE("half-order Legendre Q sequence matches quadrature oracles") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uc(std::log(1e-3), std::log(49.0));
  const int M = 40;
  for (int trial = 0; trial < 12; ++trial) {
    double chim1 = std::exp(uc(rng));
    Chi chi = make_chi(chim1);
    auto q = legendre_q_half_seq(chi, M);
    double qmax = 0.0;
    for (double v : q) qmax = std::max(qmax, std::abs(v));
    for (int m = 0; m <= M; m += (m < 8 ? 1 : 7)) {
      auto ref = oracle::q_half(chi.v, chi.m1, m);
      double tol = 1e-10 * std::abs(ref.v) + 10.0 * ref.err + 1e-15 * qmax;
      CHECK(std::abs(q[m] - ref.v) <= tol);
    }
  }
}

TEST_CASE("half-order Legendre Q deep tail matches the monotone integral") {
  // The alternative defining integral has a non-oscillatory integrand, so it
  // is accurate even when Q is ~1e-100; this checks the Miller recurrence
  // tail with genuinely relative tolerances.
  for (double chim1 : {0.5, 3.0, 20.0}) {
    Chi chi = make_chi(chim1);
    auto q = legendre_q_half_seq(chi, 60);
    for (int m : {0, 1, 5, 20, 40, 60}) {
      auto ref = oracle::q_half_monotone(chi.v, chi.m1, m);
      CHECK(std::abs(q[m] - ref.v) <= 1e-11 * std::abs(ref.v) + 10.0 * ref.err);
    }
  }
}

TEST_CASE("Q recurrence residuals are small relative to local scale") {
  for (double chim1 : {1e-3, 0.03, 1.0, 9.0, 49.0}) {
    Chi chi = make_chi(chim1);
    const int M = 60;
    auto q = legendre_q_half_seq(chi, M);
    for (int j = 2; j <= M; ++j) {
      double t1 = (2.0 * j - 1.0) * q[j];
      double t2 = 4.0 * (j - 1.0) * chi.v * q[j - 1];
      double t3 = (2.0 * j - 3.0) * q[j - 2];
      double scale = std::max({std::abs(t1), std::abs(t2), std::abs(t3)});
      if (scale == 0.0) continue;  // underflowed tail
      CHECK(std::abs(t1 - t2 + t3) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("forward and backward recurrences agree in the overlap window") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uc(0.01, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    Chi chi = make_chi(uc(rng));
    auto qf = legendre_q_half_seq_forward(chi, 20);
    auto qb = legendre_q_half_seq_miller(chi, 20);
    for (int m = 0; m <= 20; ++m)
      CHECK(std::abs(qf[m] - qb[m]) <= 1e-10 * std::abs(qb[m]));
  }
}

TEST_CASE("power sequences S and T match quadrature oracles") {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> uc(std::log(1e-3), std::log(49.0));
  const int M = 40;
  for (int trial = 0; trial < 10; ++trial) {
    Chi chi = make_chi(std::exp(uc(rng)));
    auto q = legendre_q_half_seq(chi, M);
    auto st = power_seqs(chi, q, M);
    double smax = 0.0, tmax = 0.0;
    for (int m = 0; m <= M; ++m) {
      smax = std::max(smax, std::abs(st.S[m]));
      tmax = std::max(tmax, std::abs(st.T[m]));
    }
    for (int m = 0; m <= M; m += (m < 6 ? 1 : 9)) {
      auto rs = oracle::s_seq(chi.v, chi.m1, m);
      auto rt = oracle::t_seq(chi.v, chi.m1, m);
      CHECK(std::abs(st.S[m] - rs.v) <=
            1e-10 * std::abs(rs.v) + 10.0 * rs.err + 1e-14 * smax);
      CHECK(std::abs(st.T[m] - rt.v) <=
            1e-10 * std::abs(rt.v) + 10.0 * rt.err + 1e-14 * tmax);
    }
  }
}

TEST_CASE("T sequence satisfies its three-term recurrence") {
  for (double chim1 : {1e-4, 0.02, 1.0, 30.0}) {
    Chi chi = make_chi(chim1);
    auto q = legendre_q_half_seq(chi, 50);
    auto st = power_seqs(chi, q, 50);
    // Seeds: T_0 = 2 pi / sqrt(chi^2-1), T_1 = -2 pi + chi T_0.
    double root = std::sqrt(chi.m1 * (chi.v + 1.0));
    CHECK(std::abs(st.T[0] - 2.0 * pi / root) <= 1e-13 * st.T[0]);
    CHECK(std::abs(st.T[1] - (-2.0 * pi + chi.v * st.T[0])) <=
          1e-12 * std::max(std::abs(st.T[1]), 2.0 * pi));
    for (int m = 1; m < 50; ++m) {
      double lhs = st.T[m + 1];
      double rhs = 2.0 * chi.v * st.T[m] - st.T[m - 1];
      double scale =
          std::max({std::abs(lhs), 2.0 * chi.v * std::abs(st.T[m]),
                    std::abs(st.T[m - 1])});
      if (scale == 0.0) continue;
      CHECK(std::abs(lhs - rhs) <= 1e-12 * scale);
    }
  }
}
