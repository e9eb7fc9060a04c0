#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kae/error.hpp"
#include "kae/grad_check.hpp"
#include "kae/rng.hpp"
#include "kae/tape.hpp"
#include "kae/tensor.hpp"

using namespace kae;

namespace {

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double scl = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scl * rng.normal();
    return t;
}

// Values bounded away from zero so finite differences never cross the relu kink.
Tensor rand_away_from_zero(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        t[i] = sign * rng.uniform(0.2, 1.0);
    }
    return t;
}

}  // namespace

TEST_CASE("matmul forward matches a hand-computed product") {
    Tape tape;
    Var a = constant(tape, Tensor{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    Var b = constant(tape, Tensor{{7.0, 8.0}, {9.0, 10.0}, {11.0, 12.0}});
    Var c = matmul(a, b);
    const Tensor& cv = tape.value(c.id);
    CHECK(cv.extent(0) == 2);
    CHECK(cv.extent(1) == 2);
    CHECK(cv.at(0, 0) == doctest::Approx(58.0));
    CHECK(cv.at(0, 1) == doctest::Approx(64.0));
    CHECK(cv.at(1, 0) == doctest::Approx(139.0));
    CHECK(cv.at(1, 1) == doctest::Approx(154.0));
}

TEST_CASE("elementwise ops compute expected values") {
    Tape tape;
    Var a = constant(tape, Tensor::vector({1.0, -2.0, 3.0}));
    Var b = constant(tape, Tensor::vector({0.5, 4.0, -1.0}));
    CHECK(tape.value(add(a, b).id)[1] == doctest::Approx(2.0));
    CHECK(tape.value(sub(a, b).id)[2] == doctest::Approx(4.0));
    CHECK(tape.value(mul(a, b).id)[0] == doctest::Approx(0.5));
    CHECK(tape.value(scale(a, -2.0).id)[2] == doctest::Approx(-6.0));
    CHECK(tape.value(relu(a).id)[1] == 0.0);
    CHECK(tape.value(relu(a).id)[0] == 1.0);
}

TEST_CASE("softmax rows are normalized and match direct evaluation") {
    Rng rng(17);
    Tensor x = randn(rng, {4, 6}, 2.0);
    Tape tape;
    Var y = softmax_rows(constant(tape, x));
    const Tensor& yv = tape.value(y.id);
    for (std::size_t i = 0; i < 4; ++i) {
        double sum = 0.0;
        double direct_den = 0.0;
        for (std::size_t j = 0; j < 6; ++j) direct_den += std::exp(x.at(i, j));
        for (std::size_t j = 0; j < 6; ++j) {
            sum += yv.at(i, j);
            CHECK(yv.at(i, j) == doctest::Approx(std::exp(x.at(i, j)) / direct_den).epsilon(1e-12));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer_norm matches direct normalization") {
    Rng rng(23);
    Tensor x = randn(rng, {3, 5});
    Tensor gain = randn(rng, {5});
    Tensor bias = randn(rng, {5});
    Tape tape;
    Var y = layer_norm(constant(tape, x), constant(tape, gain), constant(tape, bias));
    const Tensor& yv = tape.value(y.id);
    for (std::size_t i = 0; i < 3; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < 5; ++j) mu += x.at(i, j);
        mu /= 5.0;
        double var = 0.0;
        for (std::size_t j = 0; j < 5; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
        var /= 5.0;
        for (std::size_t j = 0; j < 5; ++j) {
            const double expect = (x.at(i, j) - mu) / std::sqrt(var + 1e-5) * gain[j] + bias[j];
            CHECK(yv.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("multihead attention matches a per-head reference") {
    Rng rng(31);
    const std::size_t S = 2, H = 2, T = 3, d = 4, hd = d / H;
    Tensor q = randn(rng, {S * T, d});
    Tensor k = randn(rng, {S * T, d});
    Tensor v = randn(rng, {S * T, d});
    Tape tape;
    Var out = multihead_attention(constant(tape, q), constant(tape, k), constant(tape, v), H, S);
    const Tensor& ov = tape.value(out.id);

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < T; ++i) {
                std::vector<double> w(T);
                double den = 0.0;
                for (std::size_t j = 0; j < T; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) {
                        dot += q.at(s * T + i, h * hd + c) * k.at(s * T + j, h * hd + c);
                    }
                    w[j] = std::exp(dot / std::sqrt(static_cast<double>(hd)));
                    den += w[j];
                }
                for (std::size_t c = 0; c < hd; ++c) {
                    double expect = 0.0;
                    for (std::size_t j = 0; j < T; ++j) {
                        expect += w[j] / den * v.at(s * T + j, h * hd + c);
                    }
                    CHECK(ov.at(s * T + i, h * hd + c) ==
                          doctest::Approx(expect).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("circular convolution matches a circulant-matrix product") {
    Rng rng(37);
    const std::size_t cin = 2, cout = 3, L = 8, K = 4;
    Tensor x = randn(rng, {cin, L});
    Tensor w = randn(rng, {cout, cin, K});
    Tensor b = randn(rng, {cout});
    Tape tape;
    Var y = conv1d_circular(constant(tape, x), constant(tape, w), constant(tape, b));
    const Tensor& yv = tape.value(y.id);

    for (std::size_t co = 0; co < cout; ++co) {
        // Build the dense circulant operator row by row and apply it directly.
        for (std::size_t l = 0; l < L; ++l) {
            double expect = b[co];
            for (std::size_t ci = 0; ci < cin; ++ci) {
                std::vector<double> row(L, 0.0);
                for (std::size_t t = 0; t < K; ++t) {
                    row[(l + t) % L] += w[(co * cin + ci) * K + t];
                }
                for (std::size_t src = 0; src < L; ++src) expect += row[src] * x.at(ci, src);
            }
            CHECK(yv.at(co, l) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("avg_pool2 halves the length") {
    Tape tape;
    Var y = avg_pool2(constant(tape, Tensor{{1.0, 3.0, 5.0, 9.0}, {0.0, 2.0, -4.0, 4.0}}));
    const Tensor& yv = tape.value(y.id);
    CHECK(yv.extent(1) == 2);
    CHECK(yv.at(0, 0) == doctest::Approx(2.0));
    CHECK(yv.at(0, 1) == doctest::Approx(7.0));
    CHECK(yv.at(1, 0) == doctest::Approx(1.0));
    CHECK(yv.at(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("structural ops rearrange values") {
    Tape tape;
    Var a = constant(tape, Tensor{{1.0, 2.0}, {3.0, 4.0}});
    const Tensor& tv = tape.value(transpose(a).id);
    CHECK(tv.at(0, 1) == 3.0);
    CHECK(tv.at(1, 0) == 2.0);
    const Tensor& rv = tape.value(reshape(a, {4}).id);
    CHECK(rv[2] == 3.0);
    const Tensor& tiled = tape.value(tile_rows(a, 3).id);
    CHECK(tiled.extent(0) == 6);
    CHECK(tiled.at(4, 1) == 2.0);
    const Tensor& biased =
        tape.value(add_bias(a, constant(tape, Tensor::vector({10.0, 20.0}))).id);
    CHECK(biased.at(1, 0) == 13.0);
    CHECK(biased.at(1, 1) == 24.0);
    CHECK(tape.value(sum_all(a).id)[0] == 10.0);
    Var b = constant(tape, Tensor{{1.0, 2.0}, {3.0, 8.0}});
    CHECK(tape.value(mean_sq_diff(a, b).id)[0] == doctest::Approx(4.0));
}

TEST_CASE("gather_rows selects rows and scatters gradients back") {
    Tape tape;
    Var a = constant(tape, Tensor{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    Var g = gather_rows(a, {2, 0, 2});
    const Tensor& gv = g.value();
    CHECK(gv.extent(0) == 3);
    CHECK(gv.at(0, 0) == 5.0);
    CHECK(gv.at(1, 1) == 2.0);
    CHECK(gv.at(2, 0) == 5.0);
    // Row 2 is used twice, so its gradient accumulates both contributions.
    tape.backward(sum_all(g).id);
    const Tensor& da = tape.grad(a.id);
    CHECK(da.at(0, 0) == 1.0);
    CHECK(da.at(1, 0) == 0.0);
    CHECK(da.at(2, 0) == 2.0);
    CHECK_THROWS_AS(gather_rows(a, {3}), Error);

    Rng rng(mix_seed(902, 7));
    Tensor x = randn(rng, {4, 3});
    Tensor t = randn(rng, {3, 3});
    auto rep = check_gradients({x, t}, [](Tape&, const std::vector<Var>& v) {
        return mean_sq_diff(gather_rows(v[0], {1, 3, 1}), v[1]);
    });
    CHECK(rep.max_err < 1e-6);
}

TEST_CASE("gradients match central differences across seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(mix_seed(900, seed));
        const double tol = 1e-6;

        // matmul composed with a quadratic readout
        {
            Tensor a = randn(rng, {3, 4});
            Tensor b = randn(rng, {4, 2});
            Tensor target = randn(rng, {3, 2});
            auto rep = check_gradients(
                {a, b, target},
                [](Tape&, const std::vector<Var>& v) {
                    return mean_sq_diff(matmul(v[0], v[1]), v[2]);
                });
            CHECK(rep.max_err < tol);
        }

        // elementwise chain: relu(a*b + c) summed
        {
            Tensor a = rand_away_from_zero(rng, {4, 3});
            Tensor b = rand_away_from_zero(rng, {4, 3});
            Tensor c = rand_away_from_zero(rng, {4, 3});
            auto rep = check_gradients(
                {a, b, c},
                [](Tape&, const std::vector<Var>& v) {
                    return sum_all(relu(add(mul(v[0], v[1]), v[2])));
                });
            CHECK(rep.max_err < tol);
        }

        // sub/scale
        {
            Tensor a = randn(rng, {5});
            Tensor b = randn(rng, {5});
            auto rep = check_gradients(
                {a, b},
                [](Tape&, const std::vector<Var>& v) {
                    return sum_all(mul(scale(sub(v[0], v[1]), 1.7), v[0]));
                });
            CHECK(rep.max_err < tol);
        }

        // softmax
        {
            Tensor a = randn(rng, {3, 5});
            Tensor t = randn(rng, {3, 5});
            auto rep = check_gradients(
                {a, t},
                [](Tape&, const std::vector<Var>& v) {
                    return mean_sq_diff(softmax_rows(v[0]), v[1]);
                });
            CHECK(rep.max_err < tol);
        }

        // layer_norm with gain and bias
        {
            Tensor a = randn(rng, {3, 6});
            Tensor gain = randn(rng, {6});
            Tensor bias = randn(rng, {6});
            Tensor t = randn(rng, {3, 6});
            auto rep = check_gradients(
                {a, gain, bias, t},
                [](Tape&, const std::vector<Var>& v) {
                    return mean_sq_diff(layer_norm(v[0], v[1], v[2]), v[3]);
                });
            CHECK(rep.max_err < tol);
        }

        // add_bias + tile_rows + transpose + reshape
        {
            Tensor a = randn(rng, {2, 3});
            Tensor bias = randn(rng, {3});
            Tensor t = randn(rng, {12});
            auto rep = check_gradients(
                {a, bias, t},
                [](Tape&, const std::vector<Var>& v) {
                    Var tiled = tile_rows(add_bias(v[0], v[1]), 2);
                    return mean_sq_diff(reshape(transpose(tiled), {12}), v[2]);
                });
            CHECK(rep.max_err < tol);
        }

        // multihead attention, all three operands
        {
            const std::size_t S = 2, H = 2, T = 3, d = 4;
            Tensor q = randn(rng, {S * T, d});
            Tensor k = randn(rng, {S * T, d});
            Tensor v = randn(rng, {S * T, d});
            Tensor t = randn(rng, {S * T, d});
            auto rep = check_gradients(
                {q, k, v, t},
                [=](Tape&, const std::vector<Var>& vars) {
                    return mean_sq_diff(
                        multihead_attention(vars[0], vars[1], vars[2], H, S), vars[3]);
                });
            CHECK(rep.max_err < tol);
        }

        // circular conv + pooling
        {
            Tensor x = randn(rng, {2, 8});
            Tensor w = randn(rng, {3, 2, 4});
            Tensor b = randn(rng, {3});
            Tensor t = randn(rng, {3, 4});
            auto rep = check_gradients(
                {x, w, b, t},
                [](Tape&, const std::vector<Var>& v) {
                    return mean_sq_diff(avg_pool2(conv1d_circular(v[0], v[1], v[2])), v[3]);
                });
            CHECK(rep.max_err < tol);
        }
    }
}

TEST_CASE("gradient checker flags a corrupted backward") {
    // An op that computes y = 2x but wrongly reports dy/dx = 3.
    auto bad_double = [](Var a) {
        const std::size_t n = a.value().numel();
        Tensor out(a.value().shape());
        for (std::size_t i = 0; i < n; ++i) out[i] = 2.0 * a.value()[i];
        const NodeId aid = a.id;
        NodeId id = a.tape->make("bad_double", std::move(out), {aid},
                                 [aid, n](Tape& t, const Node& node) {
                                     double* da = t.grad_accum(aid).data();
                                     for (std::size_t i = 0; i < n; ++i) {
                                         da[i] += 3.0 * node.grad[i];
                                     }
                                 });
        return Var{a.tape, id};
    };
    Rng rng(5);
    Tensor x = randn(rng, {4});
    auto rep = check_gradients({x}, [&](Tape&, const std::vector<Var>& v) {
        return sum_all(bad_double(v[0]));
    });
    CHECK(rep.max_err > 0.3);
}

TEST_CASE("backward accumulates into leaf gradients across sweeps") {
    Tape tape;
    Var x = constant(tape, Tensor::vector({2.0, -1.0}));
    Var m = mul(x, x);
    Var loss = sum_all(m);
    tape.backward(loss.id);
    CHECK(tape.grad(x.id)[0] == doctest::Approx(4.0));
    CHECK(tape.grad(m.id).empty());  // non-leaf grads are consumed
    tape.backward(loss.id);
    CHECK(tape.grad(x.id)[0] == doctest::Approx(8.0));

    // Two different losses over shared intermediates also sum cleanly.
    Tape t2;
    Var y = constant(t2, Tensor::vector({3.0}));
    Var sq = mul(y, y);
    t2.backward(sum_all(sq).id);
    t2.backward(sum_all(scale(sq, 2.0)).id);
    CHECK(t2.grad(y.id)[0] == doctest::Approx(6.0 + 12.0));
}

TEST_CASE("backward rejects a non-scalar loss") {
    Tape tape;
    Var x = constant(tape, Tensor::vector({1.0, 2.0}));
    Var y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y.id), Error);
}

TEST_CASE("seeded backward reproduces a full chain split in two") {
    Rng rng(77);
    Tensor x = randn(rng, {3, 3});
    Tensor w = randn(rng, {3, 3});
    Tensor target = randn(rng, {3, 3});

    // One-tape reference: loss = msd(relu(x w) w, target).
    Tensor ref_dx, ref_dw;
    {
        Tape tape;
        Var xv = constant(tape, x);
        Var wv = constant(tape, w);
        Var h = relu(matmul(xv, wv));
        Var out = matmul(h, wv);
        tape.backward(mean_sq_diff(out, constant(tape, target)).id);
        ref_dx = tape.grad(xv.id);
        ref_dw = tape.grad(wv.id);
    }

    // Stage 1 records up to h; stage 2 treats h as a leaf; the cotangent of h
    // is then injected back into stage 1.
    Tape stage1;
    Var xv = constant(stage1, x);
    Var wv1 = constant(stage1, w);
    Var h = relu(matmul(xv, wv1));

    Tape stage2;
    Var hleaf = constant(stage2, stage1.value(h.id));
    Var wv2 = constant(stage2, w);
    Var out = matmul(hleaf, wv2);
    stage2.backward(mean_sq_diff(out, constant(stage2, target)).id);

    stage1.backward_seeded({{h.id, stage2.grad(hleaf.id)}});

    const Tensor& dx = stage1.grad(xv.id);
    for (std::size_t i = 0; i < dx.numel(); ++i) {
        CHECK(dx[i] == doctest::Approx(ref_dx[i]).epsilon(1e-12));
    }
    // w appears in both stages; its total gradient is the sum of both parts.
    const Tensor& dw_a = stage1.grad(wv1.id);
    const Tensor& dw_b = stage2.grad(wv2.id);
    for (std::size_t i = 0; i < dw_a.numel(); ++i) {
        CHECK(dw_a[i] + dw_b[i] == doctest::Approx(ref_dw[i]).epsilon(1e-12));
    }
}

TEST_CASE("flop counters follow the documented conventions") {
    Tape tape;
    Var a = constant(tape, Tensor({3, 4}));
    Var b = constant(tape, Tensor({4, 5}));
    matmul(a, b);
    CHECK(tape.flops_for("matmul") == 2 * 3 * 4 * 5);

    const std::size_t S = 2, H = 2, T = 3, d = 4;
    Tensor q({S * T, d});
    multihead_attention(constant(tape, q), constant(tape, q), constant(tape, q), H, S);
    CHECK(tape.flops_for("attention") == attention_core_flops(S, T, d, H));
    CHECK(tape.flops_total() >= tape.flops_for("matmul") + tape.flops_for("attention"));
}

TEST_CASE("shape mismatches are reported as dimension errors") {
    Tape tape;
    Var a = constant(tape, Tensor({2, 3}));
    Var b = constant(tape, Tensor({2, 3}));
    Var c = constant(tape, Tensor({3, 2}));
    CHECK_THROWS_AS(matmul(a, b), Error);
    CHECK_THROWS_AS(add(a, c), Error);
    CHECK_THROWS_AS(avg_pool2(constant(tape, Tensor({2, 5}))), Error);
    CHECK_THROWS_AS(
        multihead_attention(a, a, a, 5, 1), Error);  // heads must divide d_model
    try {
        matmul(a, b);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
        CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    }
}
