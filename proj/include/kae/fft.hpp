#pragma once

#include <complex>
#include <vector>

namespace kae {

// In-place radix-2 decimation-in-time transforms on power-of-two lengths.
// Forward uses the kernel e^{-2*pi*i*j*m/n}; the inverse applies the conjugate
// kernel and divides by n, so ifft(fft(u)) == u up to rounding. Non-power-of-
// two lengths raise a parameter error.
void fft_inplace(std::vector<std::complex<double>>& a);
void ifft_inplace(std::vector<std::complex<double>>& a);

// Conveniences for real signals: forward transform of a real vector, and the
// real part of the inverse transform (the caller guarantees the spectrum is
// conjugate-symmetric so the imaginary residue is rounding noise).
std::vector<std::complex<double>> fft_real(const std::vector<double>& u);
std::vector<double> ifft_real(std::vector<std::complex<double>> spectrum);

}  // namespace kae
