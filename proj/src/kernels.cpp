#include "kae/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kae/fastmath.hpp"
#include "kae/parallel.hpp"

namespace kae::kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            double* orow = op + i * n;
            const double* arow = ap + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = arow[kk];
                const double* brow = bp + kk * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ap[i] + bp[i];
    return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({m, n});
    const double* ap = a.data();
    const double* bp = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = ap[i * n + j] + bp[j];
    }
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out(a.shape());
    const double* ap = a.data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ap[i] > 0.0 ? ap[i] : 0.0;
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({m, n});
    const double* ap = a.data();
    double* op = out.data();
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const double* row = ap + i * n;
            double* orow = op + i * n;
            const double mx = max8(row, n);
            for (std::size_t j = 0; j < n; ++j) orow[j] = fast_exp(row[j] - mx);
            const double inv = 1.0 / sum8(orow, n);
            for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
        }
    });
    return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps,
                  std::vector<double>* mean_out, std::vector<double>* inv_std_out) {
    const std::size_t m = a.extent(0), d = a.extent(1);
    Tensor out({m, d});
    if (mean_out) mean_out->resize(m);
    if (inv_std_out) inv_std_out->resize(m);
    const double* ap = a.data();
    const double* gp = gain.data();
    const double* bp = bias.data();
    double* op = out.data();
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const double* row = ap + i * d;
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += row[j];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(var + eps);
            if (mean_out) (*mean_out)[i] = mu;
            if (inv_std_out) (*inv_std_out)[i] = inv;
            double* orow = op + i * d;
            for (std::size_t j = 0; j < d; ++j) orow[j] = (row[j] - mu) * inv * gp[j] + bp[j];
        }
    });
    return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t samples, Tensor* weights_out) {
    const std::size_t rows = q.extent(0), d = q.extent(1);
    const std::size_t tok = rows / samples, hd = d / heads;
    const double scal = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor out({rows, d});
    if (weights_out) *weights_out = Tensor({samples * heads, tok * tok});
    const double* qp = q.data();
    const double* kp = k.data();
    const double* vp = v.data();
    double* op = out.data();
    double* wp = weights_out ? weights_out->data() : nullptr;
    parallel_for(samples * heads, [&](std::size_t w0, std::size_t w1) {
        // Per-head K/V are gathered into contiguous [hd x tok] scratch so the
        // inner token loops are unit-stride.
        std::vector<double> kt(hd * tok), vt(hd * tok), srow(tok);
        for (std::size_t w = w0; w < w1; ++w) {
            const std::size_t s = w / heads, h = w % heads;
            const std::size_t row0 = s * tok, col0 = h * hd;
            for (std::size_t j = 0; j < tok; ++j) {
                const double* krow = kp + (row0 + j) * d + col0;
                const double* vrow = vp + (row0 + j) * d + col0;
                for (std::size_t c = 0; c < hd; ++c) {
                    kt[c * tok + j] = krow[c];
                    vt[c * tok + j] = vrow[c];
                }
            }
            double* wsave = wp ? wp + w * tok * tok : nullptr;
            for (std::size_t i = 0; i < tok; ++i) {
                const double* qrow = qp + (row0 + i) * d + col0;
                for (std::size_t j = 0; j < tok; ++j) srow[j] = 0.0;
                for (std::size_t c = 0; c < hd; ++c) {
                    const double qc = qrow[c] * scal;
                    const double* krow = kt.data() + c * tok;
                    for (std::size_t j = 0; j < tok; ++j) srow[j] += qc * krow[j];
                }
                const double mx = max8(srow.data(), tok);
                for (std::size_t j = 0; j < tok; ++j) srow[j] = fast_exp(srow[j] - mx);
                const double inv = 1.0 / sum8(srow.data(), tok);
                for (std::size_t j = 0; j < tok; ++j) srow[j] *= inv;
                if (wsave) std::memcpy(wsave + i * tok, srow.data(), tok * sizeof(double));
                double* orow = op + (row0 + i) * d + col0;
                for (std::size_t c = 0; c < hd; ++c) {
                    orow[c] = dot8(srow.data(), vt.data() + c * tok, tok);
                }
            }
        }
    });
    return out;
}

void attention_backward(const Tensor& grad, const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t heads, std::size_t samples,
                        Tensor& dq, Tensor& dk, Tensor& dv) {
    const std::size_t rows = q.extent(0), d = q.extent(1);
    const std::size_t tok = rows / samples, hd = d / heads;
    const double scal = 1.0 / std::sqrt(static_cast<double>(hd));
    const double* g = grad.data();
    const double* qp = q.data();
    const double* kp = k.data();
    const double* vp = v.data();
    double* dqp = dq.data();
    double* dkp = dk.data();
    double* dvp = dv.data();
    // Each (sample, head) pair touches a disjoint row/column block of the
    // operand gradients, so the loop parallelizes without races.
    parallel_for(samples * heads, [&](std::size_t w0, std::size_t w1) {
        std::vector<double> kt(hd * tok), vt(hd * tok);
        std::vector<double> dkt(hd * tok), dvt(hd * tok);
        std::vector<double> arow(tok), da(tok), ds(tok);
        for (std::size_t w = w0; w < w1; ++w) {
            const std::size_t s = w / heads, h = w % heads;
            const std::size_t row0 = s * tok, col0 = h * hd;
            for (std::size_t j = 0; j < tok; ++j) {
                const double* krow = kp + (row0 + j) * d + col0;
                const double* vrow = vp + (row0 + j) * d + col0;
                for (std::size_t c = 0; c < hd; ++c) {
                    kt[c * tok + j] = krow[c];
                    vt[c * tok + j] = vrow[c];
                }
            }
            std::fill(dkt.begin(), dkt.end(), 0.0);
            std::fill(dvt.begin(), dvt.end(), 0.0);
            for (std::size_t i = 0; i < tok; ++i) {
                const double* grow = g + (row0 + i) * d + col0;
                const double* qrow = qp + (row0 + i) * d + col0;
                // Recompute the softmax row exactly as the forward pass did.
                for (std::size_t j = 0; j < tok; ++j) arow[j] = 0.0;
                for (std::size_t c = 0; c < hd; ++c) {
                    const double qc = qrow[c] * scal;
                    const double* krow = kt.data() + c * tok;
                    for (std::size_t j = 0; j < tok; ++j) arow[j] += qc * krow[j];
                }
                const double mx = max8(arow.data(), tok);
                for (std::size_t j = 0; j < tok; ++j) arow[j] = fast_exp(arow[j] - mx);
                const double invz = 1.0 / sum8(arow.data(), tok);
                for (std::size_t j = 0; j < tok; ++j) arow[j] *= invz;
                // dA = dOut · V^T
                for (std::size_t j = 0; j < tok; ++j) da[j] = 0.0;
                for (std::size_t c = 0; c < hd; ++c) {
                    const double gc = grow[c];
                    const double* vrow = vt.data() + c * tok;
                    for (std::size_t j = 0; j < tok; ++j) da[j] += gc * vrow[j];
                }
                // softmax backward: dS = A ∘ (dA − <dA, A>)
                const double dot = dot8(da.data(), arow.data(), tok);
                for (std::size_t j = 0; j < tok; ++j) ds[j] = arow[j] * (da[j] - dot);
                // dV^T += dOut ⊗ A
                for (std::size_t c = 0; c < hd; ++c) {
                    const double gc = grow[c];
                    double* dvrow = dvt.data() + c * tok;
                    for (std::size_t j = 0; j < tok; ++j) dvrow[j] += gc * arow[j];
                }
                // dQ = scal · dS · K ;  dK^T += scal · Q_i ⊗ dS
                double* dqrow = dqp + (row0 + i) * d + col0;
                for (std::size_t c = 0; c < hd; ++c) {
                    dqrow[c] += scal * dot8(ds.data(), kt.data() + c * tok, tok);
                    const double qc = scal * qrow[c];
                    double* dkrow = dkt.data() + c * tok;
                    for (std::size_t j = 0; j < tok; ++j) dkrow[j] += qc * ds[j];
                }
            }
            for (std::size_t j = 0; j < tok; ++j) {
                double* dkrow = dkp + (row0 + j) * d + col0;
                double* dvrow = dvp + (row0 + j) * d + col0;
                for (std::size_t c = 0; c < hd; ++c) {
                    dkrow[c] += dkt[c * tok + j];
                    dvrow[c] += dvt[c * tok + j];
                }
            }
        }
    });
}

Tensor conv1d_circular(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t samples) {
    const std::size_t cin = x.extent(0) / samples, len = x.extent(1);
    const std::size_t cout = w.extent(0), ksz = w.extent(2);
    Tensor out({samples * cout, len});
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.data();
    double* op = out.data();
    parallel_for(samples * cout, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t idx = i0; idx < i1; ++idx) {
            const std::size_t s = idx / cout, co = idx % cout;
            const double* xs = xp + s * cin * len;
            double* orow = op + idx * len;
            for (std::size_t l = 0; l < len; ++l) orow[l] = bp[co];
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* xrow = xs + ci * len;
                const double* wrow = wp + (co * cin + ci) * ksz;
                for (std::size_t t = 0; t < ksz; ++t) {
                    const double wt = wrow[t];
                    for (std::size_t l = 0; l < len; ++l) orow[l] += wt * xrow[(l + t) % len];
                }
            }
        }
    });
    return out;
}

Tensor avg_pool2(const Tensor& x) {
    const std::size_t c = x.extent(0), len = x.extent(1), half = len / 2;
    Tensor out({c, half});
    const double* xp = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < half; ++i) {
            out[ch * half + i] = 0.5 * (xp[ch * len + 2 * i] + xp[ch * len + 2 * i + 1]);
        }
    }
    return out;
}

Tensor tile_rows(const Tensor& a, std::size_t copies) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({m * copies, n});
    for (std::size_t c = 0; c < copies; ++c) {
        std::memcpy(out.data() + c * m * n, a.data(), m * n * sizeof(double));
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n, m});
    const double* ap = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ap[i * n + j];
    }
    return out;
}

}  // namespace kae::kernels
