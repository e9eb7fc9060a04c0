#include "kae/tape.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "kae/error.hpp"
#include "kae/fastmath.hpp"
#include "kae/kernels.hpp"
#include "kae/parallel.hpp"

namespace kae {

NodeId Tape::leaf(Tensor value) {
    nodes_.push_back(Node{"leaf", {}, std::move(value), Tensor(), nullptr, 0});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::make(const char* op, Tensor value, std::vector<NodeId> parents,
                  std::function<void(Tape&, const Node&)> backward, std::size_t flops) {
    nodes_.push_back(
        Node{op, std::move(parents), std::move(value), Tensor(), std::move(backward), flops});
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_accum(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(NodeId loss) {
    if (value(loss).numel() != 1) {
        throw Error::dimension("backward requires a scalar loss, got " +
                               nodes_[loss].value.shape_string());
    }
    grad_accum(loss)[0] += 1.0;
    sweep(loss);
}

void Tape::backward_seeded(const std::vector<std::pair<NodeId, Tensor>>& seeds) {
    NodeId highest = -1;
    for (const auto& [id, cotangent] : seeds) {
        if (!nodes_[id].value.same_shape(cotangent)) {
            throw Error::dimension("seed shape " + cotangent.shape_string() +
                                   " does not match node value " +
                                   nodes_[id].value.shape_string());
        }
        Tensor& g = grad_accum(id);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += cotangent[i];
        highest = std::max(highest, id);
    }
    if (highest >= 0) sweep(highest);
}

void Tape::sweep(NodeId highest) {
    for (NodeId id = highest; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(*this, n);
        n.grad = Tensor();  // consumed; only leaf gradients survive the sweep
    }
}

std::size_t Tape::flops_total() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n.flops;
    return total;
}

std::size_t Tape::flops_for(const std::string& op) const {
    std::size_t total = 0;
    for (const auto& n : nodes_) {
        if (op == n.op) total += n.flops;
    }
    return total;
}

Var constant(Tape& tape, Tensor value) { return Var{&tape, tape.leaf(std::move(value))}; }

namespace {

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw Error::parameter("operands recorded on different tapes");
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw Error::dimension(std::string(op) + " expects a rank-2 tensor, got " +
                               t.shape_string());
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    const std::size_t m = av.extent(0), k = av.extent(1);
    const std::size_t k2 = bv.extent(0), n = bv.extent(1);
    if (k != k2) {
        throw Error::dimension("matmul inner extents differ: " + av.shape_string() + " vs " +
                               bv.shape_string());
    }
    const NodeId aid = a.id, bid = b.id;
    NodeId id = a.tape->make(
        "matmul", kernels::matmul(av, bv), {aid, bid},
        [aid, bid, m, k, n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            const double* ap = t.value(aid).data();
            const double* bp = t.value(bid).data();
            {
                // dA += G * B^T
                double* da = t.grad_accum(aid).data();
                parallel_for(m, [&](std::size_t i0, std::size_t i1) {
                    for (std::size_t i = i0; i < i1; ++i) {
                        const double* grow = g + i * n;
                        double* darow = da + i * k;
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            darow[kk] += dot8(grow, bp + kk * n, n);
                        }
                    }
                });
            }
            {
                // dB += A^T * G
                double* db = t.grad_accum(bid).data();
                parallel_for(k, [&](std::size_t k0, std::size_t k1) {
                    for (std::size_t kk = k0; kk < k1; ++kk) {
                        double* dbrow = db + kk * n;
                        for (std::size_t i = 0; i < m; ++i) {
                            const double aik = ap[i * k + kk];
                            const double* grow = g + i * n;
                            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
                        }
                    }
                });
            }
        },
        2 * m * k * n);
    return Var{a.tape, id};
}

namespace {

Var elementwise(Var a, Var b, const char* name, int kind) {
    require_same_tape(a, b);
    if (!a.value().same_shape(b.value())) {
        throw Error::dimension(std::string(name) + " shape mismatch: " + a.value().shape_string() +
                               " vs " + b.value().shape_string());
    }
    const std::size_t n = a.value().numel();
    Tensor out(a.value().shape());
    const double* ap = a.value().data();
    const double* bp = b.value().data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = kind == 0 ? ap[i] + bp[i] : kind == 1 ? ap[i] - bp[i] : ap[i] * bp[i];
    }
    const NodeId aid = a.id, bid = b.id;
    NodeId id = a.tape->make(
        name, std::move(out), {aid, bid},
        [aid, bid, n, kind](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            if (kind == 2) {
                const double* bv = t.value(bid).data();
                for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
                double* db = t.grad_accum(bid).data();
                const double* av = t.value(aid).data();
                for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
                double* db = t.grad_accum(bid).data();
                const double sgn = kind == 0 ? 1.0 : -1.0;
                for (std::size_t i = 0; i < n; ++i) db[i] += sgn * g[i];
            }
        },
        n);
    return Var{a.tape, id};
}

}  // namespace

Var add(Var a, Var b) { return elementwise(a, b, "add", 0); }
Var sub(Var a, Var b) { return elementwise(a, b, "sub", 1); }
Var mul(Var a, Var b) { return elementwise(a, b, "mul", 2); }

Var scale(Var a, double c) {
    const std::size_t n = a.value().numel();
    Tensor out(a.value().shape());
    const double* ap = a.value().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = ap[i] * c;
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "scale", std::move(out), {aid},
        [aid, n, c](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * c;
        },
        n);
    return Var{a.tape, id};
}

Var relu(Var a) {
    const std::size_t n = a.value().numel();
    const NodeId aid = a.id;
    // Subgradient at exactly 0 is 0.
    NodeId id = a.tape->make(
        "relu", kernels::relu(a.value()), {aid},
        [aid, n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            const double* av = t.value(aid).data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < n; ++i) {
                if (av[i] > 0.0) da[i] += g[i];
            }
        },
        n);
    return Var{a.tape, id};
}

Var softmax_rows(Var a) {
    require_rank2(a.value(), "softmax_rows");
    const std::size_t m = a.value().extent(0), n = a.value().extent(1);
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "softmax_rows", kernels::softmax_rows(a.value()), {aid},
        [aid, m, n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            const double* y = node.value.data();
            double* da = t.grad_accum(aid).data();
            parallel_for(m, [&](std::size_t i0, std::size_t i1) {
                for (std::size_t i = i0; i < i1; ++i) {
                    const double* grow = g + i * n;
                    const double* yrow = y + i * n;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
                    double* darow = da + i * n;
                    for (std::size_t j = 0; j < n; ++j) darow[j] += yrow[j] * (grow[j] - dot);
                }
            });
        },
        5 * m * n);
    return Var{a.tape, id};
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
    require_same_tape(a, gain);
    require_same_tape(a, bias);
    require_rank2(a.value(), "layer_norm");
    const std::size_t m = a.value().extent(0), d = a.value().extent(1);
    if (gain.value().numel() != d || bias.value().numel() != d) {
        throw Error::dimension("layer_norm gain/bias must have length " + std::to_string(d));
    }
    if (eps <= 0.0) throw Error::parameter("layer_norm eps must be positive");
    std::vector<double> mean, inv_std;
    Tensor out = kernels::layer_norm(a.value(), gain.value(), bias.value(), eps, &mean, &inv_std);
    const NodeId aid = a.id, gid = gain.id, bid = bias.id;
    NodeId id = a.tape->make(
        "layer_norm", std::move(out), {aid, gid, bid},
        [aid, gid, bid, m, d, mean = std::move(mean),
         inv_std = std::move(inv_std)](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            const double* x = t.value(aid).data();
            const double* gn = t.value(gid).data();
            double* dx = t.grad_accum(aid).data();
            double* dgain = t.grad_accum(gid).data();
            double* dbias = t.grad_accum(bid).data();
            // Gain/bias reductions run sequentially over rows for a fixed order.
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g + i * d;
                const double* xrow = x + i * d;
                for (std::size_t j = 0; j < d; ++j) {
                    dgain[j] += grow[j] * (xrow[j] - mean[i]) * inv_std[i];
                    dbias[j] += grow[j];
                }
            }
            parallel_for(m, [&](std::size_t i0, std::size_t i1) {
                for (std::size_t i = i0; i < i1; ++i) {
                    const double* grow = g + i * d;
                    const double* xrow = x + i * d;
                    double* dxrow = dx + i * d;
                    double sum_dh = 0.0, sum_dh_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xhat = (xrow[j] - mean[i]) * inv_std[i];
                        const double dh = grow[j] * gn[j];
                        sum_dh += dh;
                        sum_dh_xhat += dh * xhat;
                    }
                    const double invd = 1.0 / static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xhat = (xrow[j] - mean[i]) * inv_std[i];
                        const double dh = grow[j] * gn[j];
                        dxrow[j] +=
                            inv_std[i] * (dh - invd * sum_dh - xhat * invd * sum_dh_xhat);
                    }
                }
            });
        },
        8 * m * d);
    return Var{a.tape, id};
}

Var add_bias(Var a, Var bias) {
    require_same_tape(a, bias);
    require_rank2(a.value(), "add_bias");
    const std::size_t m = a.value().extent(0), n = a.value().extent(1);
    if (bias.value().numel() != n) {
        throw Error::dimension("add_bias length mismatch: " + a.value().shape_string() + " vs " +
                               bias.value().shape_string());
    }
    const NodeId aid = a.id, bid = bias.id;
    NodeId id = a.tape->make(
        "add_bias", kernels::add_bias(a.value(), bias.value()), {aid, bid},
        [aid, bid, m, n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < m * n; ++i) da[i] += g[i];
            double* db = t.grad_accum(bid).data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
            }
        },
        m * n);
    return Var{a.tape, id};
}

Var tile_rows(Var a, std::size_t copies) {
    require_rank2(a.value(), "tile_rows");
    const std::size_t m = a.value().extent(0), n = a.value().extent(1);
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "tile_rows", kernels::tile_rows(a.value(), copies), {aid},
        [aid, m, n, copies](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t c = 0; c < copies; ++c) {
                const double* block = g + c * m * n;
                for (std::size_t i = 0; i < m * n; ++i) da[i] += block[i];
            }
        },
        m * n * copies);
    return Var{a.tape, id};
}

Var transpose(Var a) {
    require_rank2(a.value(), "transpose");
    const std::size_t m = a.value().extent(0), n = a.value().extent(1);
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "transpose", kernels::transpose(a.value()), {aid},
        [aid, m, n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
            }
        },
        0);
    return Var{a.tape, id};
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Tensor out = a.value().reshaped(shape);
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "reshape", std::move(out), {aid},
        [aid](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < node.grad.numel(); ++i) da[i] += g[i];
        },
        0);
    return Var{a.tape, id};
}

Var sum_all(Var a) {
    const std::size_t n = a.value().numel();
    double acc = 0.0;
    const double* ap = a.value().data();
    for (std::size_t i = 0; i < n; ++i) acc += ap[i];
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "sum_all", Tensor::scalar(acc), {aid},
        [aid, n](Tape& t, const Node& node) {
            const double g = node.grad[0];
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < n; ++i) da[i] += g;
        },
        n);
    return Var{a.tape, id};
}

Var mean_sq_diff(Var a, Var b) {
    Var d = sub(a, b);
    Var sq = mul(d, d);
    return scale(sum_all(sq), 1.0 / static_cast<double>(a.value().numel()));
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
    const Tensor& av = a.value();
    require_rank2(av, "gather_rows");
    const std::size_t m = av.extent(0), n = av.extent(1);
    for (std::size_t r : rows) {
        if (r >= m) {
            throw Error::dimension("gather_rows index " + std::to_string(r) +
                                   " out of range for " + std::to_string(m) + " rows");
        }
    }
    Tensor out({rows.size(), n});
    const double* ap = av.data();
    double* op = out.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(op + i * n, ap + rows[i] * n, n * sizeof(double));
    }
    const NodeId aid = a.id;
    NodeId id = a.tape->make(
        "gather_rows", std::move(out), {aid},
        [aid, rows = std::move(rows), n](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* da = t.grad_accum(aid).data();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                double* drow = da + rows[i] * n;
                const double* grow = g + i * n;
                for (std::size_t j = 0; j < n; ++j) drow[j] += grow[j];
            }
        },
        0);
    return Var{a.tape, id};
}

std::size_t attention_core_flops(std::size_t samples, std::size_t tokens, std::size_t d_model,
                                 std::size_t heads) {
    const std::size_t head_dim = d_model / heads;
    return samples * heads * tokens * tokens * (4 * head_dim + 5);
}

Var multihead_attention(Var q, Var k, Var v, std::size_t heads, std::size_t samples) {
    require_same_tape(q, k);
    require_same_tape(q, v);
    const Tensor& qv = q.value();
    require_rank2(qv, "multihead_attention");
    if (!qv.same_shape(k.value()) || !qv.same_shape(v.value())) {
        throw Error::dimension("attention q/k/v shapes differ");
    }
    const std::size_t rows = qv.extent(0), d = qv.extent(1);
    if (heads == 0 || d % heads != 0) {
        throw Error::config("attention head count " + std::to_string(heads) +
                            " must divide d_model " + std::to_string(d));
    }
    if (samples == 0 || rows % samples != 0) {
        throw Error::dimension("attention row count " + std::to_string(rows) +
                               " must be a multiple of sample count " + std::to_string(samples));
    }
    const std::size_t tok = rows / samples;
    Tensor out = kernels::attention(qv, k.value(), v.value(), heads, samples, nullptr);
    const NodeId qid = q.id, kid = k.id, vid = v.id;
    NodeId id = q.tape->make(
        "attention", std::move(out), {qid, kid, vid},
        [qid, kid, vid, samples, heads](Tape& t, const Node& node) {
            kernels::attention_backward(node.grad, t.value(qid), t.value(kid), t.value(vid),
                                        heads, samples, t.grad_accum(qid),
                                        t.grad_accum(kid), t.grad_accum(vid));
        },
        attention_core_flops(samples, tok, d, heads));
    return Var{q.tape, id};
}

Var conv1d_circular(Var x, Var w, Var b, std::size_t samples) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank2(xv, "conv1d_circular");
    if (wv.rank() != 3) {
        throw Error::dimension("conv1d weights must be rank 3, got " + wv.shape_string());
    }
    if (samples == 0 || xv.extent(0) % samples != 0) {
        throw Error::dimension("conv1d row count " + std::to_string(xv.extent(0)) +
                               " must be a multiple of sample count " + std::to_string(samples));
    }
    const std::size_t cin = xv.extent(0) / samples, len = xv.extent(1);
    const std::size_t cout = wv.extent(0), kin = wv.extent(1), ksz = wv.extent(2);
    if (kin != cin) {
        throw Error::dimension("conv1d channel mismatch: input " + xv.shape_string() +
                               " vs weights " + wv.shape_string());
    }
    if (b.value().numel() != cout) {
        throw Error::dimension("conv1d bias must have length " + std::to_string(cout));
    }
    const NodeId xid = x.id, wid = w.id, bid = b.id;
    NodeId id = x.tape->make(
        "conv1d", kernels::conv1d_circular(xv, wv, b.value(), samples), {xid, wid, bid},
        [xid, wid, bid, samples, cin, cout, len, ksz](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            const double* xp = t.value(xid).data();
            const double* wp = t.value(wid).data();
            double* dx = t.grad_accum(xid).data();
            double* dw = t.grad_accum(wid).data();
            double* db = t.grad_accum(bid).data();
            for (std::size_t s = 0; s < samples; ++s) {
                const double* xs = xp + s * cin * len;
                double* dxs = dx + s * cin * len;
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* grow = g + (s * cout + co) * len;
                    for (std::size_t l = 0; l < len; ++l) db[co] += grow[l];
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* xrow = xs + ci * len;
                        const double* wrow = wp + (co * cin + ci) * ksz;
                        double* dxrow = dxs + ci * len;
                        double* dwrow = dw + (co * cin + ci) * ksz;
                        for (std::size_t tt = 0; tt < ksz; ++tt) {
                            const double wt = wrow[tt];
                            double acc = 0.0;
                            for (std::size_t l = 0; l < len; ++l) {
                                const std::size_t src = (l + tt) % len;
                                dxrow[src] += wt * grow[l];
                                acc += xrow[src] * grow[l];
                            }
                            dwrow[tt] += acc;
                        }
                    }
                }
            }
        },
        2 * samples * cout * cin * ksz * len);
    return Var{x.tape, id};
}

Var avg_pool2(Var x) {
    require_rank2(x.value(), "avg_pool2");
    const std::size_t c = x.value().extent(0), len = x.value().extent(1);
    if (len % 2 != 0) {
        throw Error::dimension("avg_pool2 needs an even length, got " + x.value().shape_string());
    }
    const std::size_t half = len / 2;
    const NodeId xid = x.id;
    NodeId id = x.tape->make(
        "avg_pool2", kernels::avg_pool2(x.value()), {xid},
        [xid, c, len, half](Tape& t, const Node& node) {
            const double* g = node.grad.data();
            double* dx = t.grad_accum(xid).data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < half; ++i) {
                    const double gi = 0.5 * g[ch * half + i];
                    dx[ch * len + 2 * i] += gi;
                    dx[ch * len + 2 * i + 1] += gi;
                }
            }
        },
        c * len);
    return Var{x.tape, id};
}

}  // namespace kae
