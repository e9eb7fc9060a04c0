#include "kae/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "kae/error.hpp"
#include "kae/svg.hpp"

namespace kae {

namespace {

constexpr double kDeflate = 1e-14;

struct Mat {
    std::size_t n = 0;
    std::vector<double> a;
    double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

// Householder similarity reduction to upper Hessenberg form.
void hessenberg(Mat& H) {
    const std::size_t n = H.n;
    if (n < 3) return;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        const std::size_t len = n - k - 1;  // rows k+1..n-1 of column k
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            v[i] = H(k + 1 + i, k);
            norm_sq += v[i] * v[i];
        }
        const double norm = std::sqrt(norm_sq);
        if (norm == 0.0) continue;
        const double alpha = v[0] >= 0.0 ? -norm : norm;
        v[0] -= alpha;
        double vtv = 0.0;
        for (std::size_t i = 0; i < len; ++i) vtv += v[i] * v[i];
        const double beta = 2.0 / vtv;
        // Left: rows k+1..n-1, all columns k..n-1.
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < len; ++i) s += v[i] * H(k + 1 + i, j);
            s *= beta;
            for (std::size_t i = 0; i < len; ++i) H(k + 1 + i, j) -= s * v[i];
        }
        // Right: all rows, columns k+1..n-1.
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < len; ++j) s += H(i, k + 1 + j) * v[j];
            s *= beta;
            for (std::size_t j = 0; j < len; ++j) H(i, k + 1 + j) -= s * v[j];
        }
        for (std::size_t i = k + 2; i < n; ++i) H(i, k) = 0.0;
    }
}

// One implicit double-shift sweep on the active window [lo, hi] (inclusive,
// size >= 3) with the shift pair encoded by its sum s and product t.
void francis_step(Mat& H, std::size_t lo, std::size_t hi, double s, double t) {
    auto reflect3_left = [&](std::size_t row0, const double* v, double beta, std::size_t c0) {
        for (std::size_t j = c0; j <= hi; ++j) {
            double sum = v[0] * H(row0, j) + v[1] * H(row0 + 1, j) + v[2] * H(row0 + 2, j);
            sum *= beta;
            H(row0, j) -= sum * v[0];
            H(row0 + 1, j) -= sum * v[1];
            H(row0 + 2, j) -= sum * v[2];
        }
    };
    auto reflect3_right = [&](std::size_t col0, const double* v, double beta, std::size_t r1) {
        for (std::size_t i = lo; i <= r1; ++i) {
            double sum = H(i, col0) * v[0] + H(i, col0 + 1) * v[1] + H(i, col0 + 2) * v[2];
            sum *= beta;
            H(i, col0) -= sum * v[0];
            H(i, col0 + 1) -= sum * v[1];
            H(i, col0 + 2) -= sum * v[2];
        }
    };

    double x = H(lo, lo) * H(lo, lo) + H(lo, lo + 1) * H(lo + 1, lo) - s * H(lo, lo) + t;
    double y = H(lo + 1, lo) * (H(lo, lo) + H(lo + 1, lo + 1) - s);
    double z = H(lo + 1, lo) * H(lo + 2, lo + 1);
    const std::size_t ns = hi - lo + 1;
    for (std::size_t k = 0; k + 3 <= ns; ++k) {
        const double norm = std::sqrt(x * x + y * y + z * z);
        if (norm != 0.0) {
            const double alpha = x >= 0.0 ? -norm : norm;
            double v[3] = {x - alpha, y, z};
            const double vtv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if (vtv > 0.0) {
                const double beta = 2.0 / vtv;
                const std::size_t row0 = lo + k;
                reflect3_left(row0, v, beta, k == 0 ? lo : row0 - 1);
                reflect3_right(row0, v, beta, std::min(lo + k + 3, hi));
            }
        }
        x = H(lo + k + 1, lo + k);
        y = H(lo + k + 2, lo + k);
        z = (k + 4 <= ns) ? H(lo + k + 3, lo + k) : 0.0;
    }
    // Trailing 2-element reflector on [x, y] acting on rows hi-1, hi.
    const double norm = std::sqrt(x * x + y * y);
    if (norm == 0.0) return;
    const double alpha = x >= 0.0 ? -norm : norm;
    double v[2] = {x - alpha, y};
    const double vtv = v[0] * v[0] + v[1] * v[1];
    if (vtv <= 0.0) return;
    const double beta = 2.0 / vtv;
    for (std::size_t j = hi - 2; j <= hi; ++j) {
        double sum = v[0] * H(hi - 1, j) + v[1] * H(hi, j);
        sum *= beta;
        H(hi - 1, j) -= sum * v[0];
        H(hi, j) -= sum * v[1];
    }
    for (std::size_t i = lo; i <= hi; ++i) {
        double sum = H(i, hi - 1) * v[0] + H(i, hi) * v[1];
        sum *= beta;
        H(i, hi - 1) -= sum * v[0];
        H(i, hi) -= sum * v[1];
    }
}

}  // namespace

EigenSpectrum eigenvalues(const Tensor& K) {
    if (K.rank() != 2 || K.extent(0) != K.extent(1)) {
        throw Error::dimension("eigenvalues expects a square matrix, got " + K.shape_string());
    }
    const std::size_t n = K.extent(0);
    if (n == 0) throw Error::dimension("eigenvalues of an empty matrix");
    if (!K.all_finite()) throw Error::numeric("eigenvalue input contains non-finite entries");

    Mat H{n, K.values()};
    hessenberg(H);

    std::vector<std::complex<double>> eigs;
    eigs.reserve(n);
    auto emit2 = [&](std::size_t i) {
        const double a = H(i, i), b = H(i, i + 1), c = H(i + 1, i), d = H(i + 1, i + 1);
        const double mid = 0.5 * (a + d);
        const double det = a * d - b * c;
        const double disc = mid * mid - det;
        if (disc >= 0.0) {
            const double sd = std::sqrt(disc);
            eigs.emplace_back(mid + sd, 0.0);
            eigs.emplace_back(mid - sd, 0.0);
        } else {
            const double sd = std::sqrt(-disc);
            eigs.emplace_back(mid, sd);
            eigs.emplace_back(mid, -sd);
        }
    };

    const std::size_t max_sweeps = 100 * n;
    std::size_t sweeps = 0;
    std::size_t since_deflation = 0;
    long long hi = static_cast<long long>(n) - 1;
    while (hi >= 0) {
        const auto h = static_cast<std::size_t>(hi);
        for (std::size_t i = 0; i < h; ++i) {
            if (std::abs(H(i + 1, i)) <=
                kDeflate * (std::abs(H(i, i)) + std::abs(H(i + 1, i + 1)))) {
                H(i + 1, i) = 0.0;
            }
        }
        if (hi == 0) {
            eigs.emplace_back(H(0, 0), 0.0);
            break;
        }
        if (H(h, h - 1) == 0.0) {
            eigs.emplace_back(H(h, h), 0.0);
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if (hi == 1 || H(h - 1, h - 2) == 0.0) {
            emit2(h - 1);
            hi -= 2;
            since_deflation = 0;
            continue;
        }
        if (++sweeps > max_sweeps) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.3e", std::abs(H(h, h - 1)));
            throw Error::numeric("eigenvalue iteration did not converge after " +
                                 std::to_string(max_sweeps) +
                                 " sweeps; residual subdiagonal " + buf);
        }
        std::size_t lo = 0;
        for (std::size_t i = h - 1; i >= 1; --i) {
            if (H(i, i - 1) == 0.0) {
                lo = i;
                break;
            }
        }
        double s, t;
        if (++since_deflation % 10 == 0) {
            // Exceptional shift: breaks the rare cycles the Wilkinson-style
            // trailing-block shifts can fall into on symmetric patterns.
            const double a = std::abs(H(h, h - 1)) + std::abs(H(h - 1, h - 2));
            s = 1.5 * a;
            t = 0.5625 * a * a;
        } else {
            s = H(h - 1, h - 1) + H(h, h);
            t = H(h - 1, h - 1) * H(h, h) - H(h - 1, h) * H(h, h - 1);
        }
        francis_step(H, lo, h, s, t);
    }

    std::sort(eigs.begin(), eigs.end(),
              [](const std::complex<double>& p, const std::complex<double>& q) {
                  const double mp = std::abs(p), mq = std::abs(q);
                  if (mp != mq) return mp > mq;
                  if (p.real() != q.real()) return p.real() > q.real();
                  return p.imag() > q.imag();
              });
    return EigenSpectrum{std::move(eigs)};
}

double determinant(const Tensor& A) {
    if (A.rank() != 2 || A.extent(0) != A.extent(1)) {
        throw Error::dimension("determinant expects a square matrix, got " + A.shape_string());
    }
    const std::size_t n = A.extent(0);
    Mat m{n, A.values()};
    double det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(m(i, k)) > std::abs(m(pivot, k))) pivot = i;
        }
        if (m(pivot, k) == 0.0) return 0.0;
        if (pivot != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(pivot, j), m(k, j));
            det = -det;
        }
        det *= m(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = m(i, k) / m(k, k);
            for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
        }
    }
    return det;
}

void write_spectrum_csv(const EigenSpectrum& spectrum, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    out << "index,re,im,modulus\n";
    char buf[40];
    for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
        const std::complex<double>& v = spectrum.values[i];
        out << i;
        for (double field : {v.real(), v.imag(), std::abs(v)}) {
            std::snprintf(buf, sizeof buf, "%.17g", field);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error::io("failed writing '" + path + "'");
}

void write_spectrum_svg(const EigenSpectrum& spectrum, const std::string& path) {
    const double size = 480.0, margin = 48.0;
    const double cx = size / 2.0, cy = size / 2.0;
    double range = 1.1;
    for (const std::complex<double>& v : spectrum.values) {
        range = std::max(range, 1.1 * std::abs(v));
    }
    const double scl = (size / 2.0 - margin) / range;
    auto px = [&](double re) { return cx + re * scl; };
    auto py = [&](double im) { return cy - im * scl; };

    SvgDoc doc(size, size);
    doc.line(margin / 2, cy, size - margin / 2, cy, "#999", 1.0);
    doc.line(cx, margin / 2, cx, size - margin / 2, "#999", 1.0);
    doc.circle(cx, cy, scl, "", "#4682b4", 1.2);
    for (double tick : {-1.0, 1.0}) {
        doc.line(px(tick), cy - 4, px(tick), cy + 4, "#999", 1.0);
        doc.text(px(tick), cy + 18, tick < 0 ? "-1" : "1", 12, "middle");
        doc.line(cx - 4, py(tick), cx + 4, py(tick), "#999", 1.0);
        doc.text(cx + 8, py(tick) + 4, tick < 0 ? "-1i" : "1i", 12);
    }
    doc.text(size - margin / 2, cy - 8, "Re", 13, "end");
    doc.text(cx + 8, margin / 2 + 12, "Im", 13);
    for (const std::complex<double>& v : spectrum.values) {
        doc.circle(px(v.real()), py(v.imag()), 4.0, "#c0392b");
    }
    doc.text(cx, margin / 2 - 4, "Koopman operator spectrum", 15, "middle");
    doc.write(path);
}

}  // namespace kae
