#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "kae/error.hpp"
#include "kae/fft.hpp"
#include "kae/rng.hpp"

using namespace kae;

namespace {

// Independent O(n^2) reference transform, same kernel sign convention.
std::vector<std::complex<double>> dft_naive(const std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double> s{0.0, 0.0};
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) *
                               static_cast<double>(m) / static_cast<double>(n);
            s += a[m] * std::polar(1.0, ang);
        }
        out[j] = s;
    }
    return out;
}

std::vector<std::complex<double>> random_complex(Rng& rng, std::size_t n) {
    std::vector<std::complex<double>> a(n);
    for (auto& z : a) z = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return a;
}

}  // namespace

TEST_CASE("fft matches the naive DFT on random vectors") {
    Rng rng(41);
    for (std::size_t n : {std::size_t{2}, std::size_t{8}, std::size_t{64},
                          std::size_t{128}, std::size_t{256}}) {
        auto a = random_complex(rng, n);
        const auto ref = dft_naive(a);
        auto got = a;
        fft_inplace(got);
        double worst = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            worst = std::max(worst, std::abs(got[j] - ref[j]));
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("inverse transform round-trips within 1e-12") {
    Rng rng(7);
    for (std::size_t n : {std::size_t{1}, std::size_t{8}, std::size_t{128},
                          std::size_t{1024}}) {
        const auto a = random_complex(rng, n);
        auto b = a;
        fft_inplace(b);
        ifft_inplace(b);
        double worst = 0.0;
        for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(b[j] - a[j]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("Parseval's identity holds within 1e-10") {
    Rng rng(3);
    const std::size_t n = 256;
    const auto a = random_complex(rng, n);
    auto spec = a;
    fft_inplace(spec);
    double time_energy = 0.0, freq_energy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        time_energy += std::norm(a[j]);
        freq_energy += std::norm(spec[j]);
    }
    CHECK(time_energy == doctest::Approx(freq_energy / static_cast<double>(n)).epsilon(1e-10));
}

TEST_CASE("constant signal concentrates in the zero mode") {
    const std::size_t n = 64;
    const double c = 0.37;
    auto spec = fft_real(std::vector<double>(n, c));
    CHECK(spec[0].real() == doctest::Approx(static_cast<double>(n) * c).epsilon(1e-13));
    CHECK(std::abs(spec[0].imag()) < 1e-12);
    for (std::size_t j = 1; j < n; ++j) CHECK(std::abs(spec[j]) < 1e-12);
}

TEST_CASE("cosine concentrates in the conjugate mode pair") {
    const std::size_t n = 128;
    const std::size_t k = 5;
    const double amp = 0.8;
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = 2.0 * std::numbers::pi * static_cast<double>(i) /
                         static_cast<double>(n);
        u[i] = amp * std::cos(static_cast<double>(k) * x);
    }
    auto spec = fft_real(u);
    for (std::size_t j = 0; j < n; ++j) {
        const double expect =
            (j == k || j == n - k) ? amp * static_cast<double>(n) / 2.0 : 0.0;
        CHECK(std::abs(std::abs(spec[j]) - expect) < 1e-10);
    }
}

TEST_CASE("real round-trip returns the original signal") {
    Rng rng(19);
    std::vector<double> u(128);
    for (auto& x : u) x = rng.normal();
    const auto back = ifft_real(fft_real(u));
    for (std::size_t i = 0; i < u.size(); ++i)
        CHECK(back[i] == doctest::Approx(u[i]).epsilon(1e-12));
}

TEST_CASE("non-power-of-two lengths are rejected as parameter errors") {
    for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{12},
                          std::size_t{100}}) {
        std::vector<std::complex<double>> a(n);
        CHECK_THROWS_AS(fft_inplace(a), Error);
        try {
            fft_inplace(a);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::parameter);
        }
    }
}
