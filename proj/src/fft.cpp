#include "kae/fft.hpp"

#include <numbers>
#include <string>
#include <utility>

#include "kae/error.hpp"

namespace kae {
namespace {

void transform(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw Error::parameter("fft length must be a power of two, got " +
                               std::to_string(n));
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    std::vector<std::complex<double>> w(n / 2);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const double ang =
            (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        for (std::size_t k = 0; k < half; ++k)
            w[k] = std::polar(1.0, ang * static_cast<double>(k));
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + half] * w[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& z : a) z *= scale;
    }
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a) { transform(a, false); }

void ifft_inplace(std::vector<std::complex<double>>& a) { transform(a, true); }

std::vector<std::complex<double>> fft_real(const std::vector<double>& u) {
    std::vector<std::complex<double>> a(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) a[i] = {u[i], 0.0};
    fft_inplace(a);
    return a;
}

std::vector<double> ifft_real(std::vector<std::complex<double>> spectrum) {
    ifft_inplace(spectrum);
    std::vector<double> u(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) u[i] = spectrum[i].real();
    return u;
}

}  // namespace kae
