#pragma once
// Shared basic types and error handling for the axisymmetric electromagnetic
// scattering library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace axem {

using cplx = std::complex<double>;
inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr cplx iu{0.0, 1.0};

/// Raised for invalid user-supplied configuration (bad geometry name, missing
/// key, inconsistent media, ...).  The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an internal numerical procedure cannot reach its accuracy
/// contract (truncation caps exceeded, non-decaying modal spectra, singular
/// factorization, ...).  The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AXEM_CHECK(cond, exc, msg)        \
  do {                                    \
    if (!(cond)) throw exc(msg);          \
  } while (0)

/// Minimal 3-vector over real or complex scalars.  dot() is bilinear (no
/// conjugation); use it for the physics pairings E.t, n x E, etc.
template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  Vec3() = default;
  Vec3(T a, T b, T c) : x(a), y(b), z(c) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  template <class S>
  friend auto operator*(const S& s, const Vec3& v) {
    using R = decltype(s * v.x);
    return Vec3<R>{s * v.x, s * v.y, s * v.z};
  }
};

template <class A, class B>
auto dot(const Vec3<A>& a, const Vec3<B>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class A, class B>
auto cross(const Vec3<A>& a, const Vec3<B>& b) {
  using R = decltype(a.x * b.x);
  return Vec3<R>{a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
                 a.x * b.y - a.y * b.x};
}

using V3d = Vec3<double>;
using V3c = Vec3<cplx>;

inline double norm2(const V3d& v) { return std::sqrt(dot(v, v)); }
inline double norm2(const V3c& v) {
  return std::sqrt(std::norm(v.x) + std::norm(v.y) + std::norm(v.z));
}
inline V3c conj(const V3c& v) {
  return {std::conj(v.x), std::conj(v.y), std::conj(v.z)};
}

inline double sq(double v) { return v * v; }

}  // namespace axem
