#pragma once

#include <complex>
#include <string>
#include <vector>

#include "kae/tensor.hpp"

namespace kae {

struct EigenSpectrum {
    // Sorted by descending modulus, ties by descending real part (then
    // descending imaginary part, so conjugate partners sit together with the
    // positive-imaginary member first).
    std::vector<std::complex<double>> values;
};

// Dense nonsymmetric eigenvalues: Householder reduction to Hessenberg form,
// then Francis implicit double-shift QR iteration. Subdiagonal entries
// deflate when |h_{i+1,i}| <= 1e-14 (|h_{i,i}| + |h_{i+1,i+1}|); remaining
// 1x1 and 2x2 diagonal blocks yield real and conjugate-pair eigenvalues.
// Input must be square (dimension error) and finite (numeric error); more
// than 100*n sweeps without convergence is a numeric error reporting the
// residual subdiagonal.
EigenSpectrum eigenvalues(const Tensor& K);

// LU determinant with partial pivoting. Shares nothing with the QR path, so
// it serves as an independent cross-check on the eigenvalue product.
double determinant(const Tensor& A);

// CSV columns: index, re, im, modulus (17 significant digits).
void write_spectrum_csv(const EigenSpectrum& spectrum, const std::string& path);

// Scatter in the complex plane over a dashed unit-circle reference.
void write_spectrum_svg(const EigenSpectrum& spectrum, const std::string& path);

}  // namespace kae
