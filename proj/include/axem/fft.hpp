#pragma once
// Thin process-wide wrapper around FFTW for in-place complex DFTs with a
// cached plan per transform length.  Forward convention:
//   X_k = sum_j x_j exp(-2*pi*i*j*k/n).

#include <complex>

namespace axem {

/// In-place forward DFT of length n (any n; powers of two in practice).
/// Thread-safe: planning is serialized, execution is re-entrant.
void fft_forward(std::complex<double>* data, int n);

}  // namespace axem
