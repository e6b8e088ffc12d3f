#include "axem/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace axem {
namespace {

std::mutex g_plan_mutex;
std::map<int, fftw_plan>& plan_cache() {
  static std::map<int, fftw_plan> cache;
  return cache;
}

fftw_plan plan_for(int n) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto& cache = plan_cache();
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  // Plan on scratch storage; FFTW_UNALIGNED lets the plan execute on any
  // caller buffer via fftw_execute_dft.
  fftw_complex* scratch = fftw_alloc_complex(static_cast<size_t>(n));
  fftw_plan p = fftw_plan_dft_1d(n, scratch, scratch, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(scratch);
  cache.emplace(n, p);
  return p;
}

}  // namespace

void fft_forward(std::complex<double>* data, int n) {
  fftw_plan p = plan_for(n);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(data),
                   reinterpret_cast<fftw_complex*>(data));
}

}  // namespace axem
