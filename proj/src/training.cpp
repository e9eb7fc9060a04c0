#include "kae/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "kae/error.hpp"
#include "kae/rng.hpp"

namespace kae {

namespace {

void validate_loss_batch(const ModelConfig& cfg, std::size_t T, std::size_t n, std::size_t P) {
    if (n != cfg.n) {
        throw Error::dimension("loss batch state dimension " + std::to_string(n) +
                               " does not match model n=" + std::to_string(cfg.n));
    }
    if (T < 2) {
        throw Error::config("loss requires trajectories with at least 2 timesteps, got T=" +
                            std::to_string(T));
    }
    if (P < 1 || P > T - 1) {
        throw Error::config("prediction horizon P=" + std::to_string(P) +
                            " must satisfy 1 <= P <= T-1 with T=" + std::to_string(T));
    }
}

double sum_sq_diff(const double* a, const double* b, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace

LossReport loss_components(const Model& model, const Tensor& batch, std::size_t P) {
    if (batch.rank() != 3) {
        throw Error::dimension("loss expects a [batch x T x n] stack, got " +
                               batch.shape_string());
    }
    const std::size_t b = batch.extent(0), T = batch.extent(1), n = batch.extent(2);
    if (b == 0) throw Error::dimension("loss batch is empty");
    validate_loss_batch(model.config, T, n, P);
    const std::size_t r = model.config.r;

    double sse1 = 0.0, sse4 = 0.0, sse5 = 0.0;
    std::vector<double> sse2(P + 1, 0.0), sse3(P + 1, 0.0);

    // Chunk so one forward pass stays near 512 state rows regardless of T.
    const std::size_t chunk = std::max<std::size_t>(1, 512 / T);
    for (std::size_t c0 = 0; c0 < b; c0 += chunk) {
        const std::size_t cb = std::min(b, c0 + chunk) - c0;
        Tensor U({cb * T, n});
        std::memcpy(U.data(), batch.data() + c0 * T * n, cb * T * n * sizeof(double));

        Tensor G = outer_encode(model, U);
        Tensor Y = inner_encode(model, G);
        sse1 += sum_sq_diff(decode(model, Y).data(), U.data(), U.numel());
        sse4 += sum_sq_diff(outer_decode(model, G).data(), U.data(), U.numel());
        sse5 += sum_sq_diff(inner_decode(model, Y).data(), G.data(), G.numel());

        Tensor Z = Y;
        for (std::size_t p = 1; p <= P; ++p) {
            Z = advance(model, Z, 1);
            const std::size_t span = T - p;
            Tensor Za({cb * span, r});
            for (std::size_t s = 0; s < cb; ++s) {
                std::memcpy(Za.data() + s * span * r, Z.data() + s * T * r,
                            span * r * sizeof(double));
            }
            Tensor Dp = decode(model, Za);
            for (std::size_t s = 0; s < cb; ++s) {
                for (std::size_t k = 0; k < span; ++k) {
                    sse2[p] += sum_sq_diff(Dp.data() + (s * span + k) * n,
                                           U.data() + (s * T + k + p) * n, n);
                    sse3[p] += sum_sq_diff(Za.data() + (s * span + k) * r,
                                           Y.data() + (s * T + k + p) * r, r);
                }
            }
        }
    }

    LossReport rep;
    const double denom = static_cast<double>(b * T * n);
    rep.loss1 = sse1 / denom;
    rep.loss4 = sse4 / denom;
    rep.loss5 = sse5 / denom;
    for (std::size_t p = 1; p <= P; ++p) {
        rep.loss2 += sse2[p] / static_cast<double>(b * (T - p) * n);
        rep.loss3 += sse3[p] / static_cast<double>(b * (T - p) * r);
    }
    rep.loss2 /= static_cast<double>(P);
    rep.loss3 /= static_cast<double>(P);
    rep.total = rep.loss1 + rep.loss2 + rep.loss3 + rep.loss4 + rep.loss5;
    return rep;
}

Var loss_total(const TapeModel& tm, const Tensor& batch, std::size_t P) {
    if (batch.rank() != 3) {
        throw Error::dimension("loss expects a [batch x T x n] stack, got " +
                               batch.shape_string());
    }
    const std::size_t b = batch.extent(0), T = batch.extent(1), n = batch.extent(2);
    if (b == 0) throw Error::dimension("loss batch is empty");
    validate_loss_batch(*tm.config, T, n, P);

    Tape& tape = *tm.tape;
    Var U = constant(tape, batch.reshaped({b * T, n}));
    Var G = outer_encode(tm, U);
    Var Y = inner_encode(tm, G);
    Var l1 = mean_sq_diff(decode(tm, Y), U);
    Var l4 = mean_sq_diff(outer_decode(tm, G), U);
    Var l5 = mean_sq_diff(inner_decode(tm, Y), G);

    Var z = Y;
    Var l2acc, l3acc;
    for (std::size_t p = 1; p <= P; ++p) {
        z = advance(tm, z, 1);
        std::vector<std::size_t> anchors, targets;
        anchors.reserve(b * (T - p));
        targets.reserve(b * (T - p));
        for (std::size_t s = 0; s < b; ++s) {
            for (std::size_t k = 0; k + p < T; ++k) {
                anchors.push_back(s * T + k);
                targets.push_back(s * T + k + p);
            }
        }
        Var za = gather_rows(z, anchors);
        Var l3p = mean_sq_diff(gather_rows(Y, targets), za);
        Var l2p = mean_sq_diff(decode(tm, za), gather_rows(U, targets));
        l2acc = (p == 1) ? l2p : add(l2acc, l2p);
        l3acc = (p == 1) ? l3p : add(l3acc, l3p);
    }
    Var l2 = scale(l2acc, 1.0 / static_cast<double>(P));
    Var l3 = scale(l3acc, 1.0 / static_cast<double>(P));
    return add(add(add(l1, l2), add(l3, l4)), l5);
}

AdamState make_adam_state(const Model& model) {
    AdamState state;
    const std::size_t count = model.params.size();
    state.m.reserve(count);
    state.v.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Tensor& t = model.params.tensor(i);
        state.m.push_back(Tensor(t.shape()));
        state.v.push_back(Tensor(t.shape()));
    }
    return state;
}

void optimizer_step(Model& model, const std::vector<Tensor>& grads, AdamState& state,
                    const TrainConfig& cfg) {
    const std::size_t count = model.params.size();
    if (grads.size() != count) {
        throw Error::dimension("optimizer expects " + std::to_string(count) +
                               " gradient tensors, got " + std::to_string(grads.size()));
    }
    if (state.m.size() != count || state.v.size() != count) {
        throw Error::dimension("optimizer state does not match the parameter store");
    }

    double norm_sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        if (grads[i].numel() == 0) continue;
        if (!grads[i].same_shape(model.params.tensor(i))) {
            throw Error::dimension("gradient shape mismatch for parameter '" +
                                   model.params.names()[i] + "'");
        }
        if (!grads[i].all_finite()) {
            throw Error::numeric("non-finite gradient for parameter '" +
                                 model.params.names()[i] + "'");
        }
        const double* g = grads[i].data();
        for (std::size_t j = 0; j < grads[i].numel(); ++j) norm_sq += g[j] * g[j];
    }
    double factor = 1.0;
    const double norm = std::sqrt(norm_sq);
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) factor = cfg.clip_norm / norm;

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double mc = 1.0 - std::pow(cfg.adam_beta1, t);
    const double vc = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor& theta = model.params.tensor(i);
        double* w = theta.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const double* g = grads[i].numel() ? grads[i].data() : nullptr;
        for (std::size_t j = 0; j < theta.numel(); ++j) {
            const double gj = g ? factor * g[j] : 0.0;
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * gj;
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * gj * gj;
            const double mhat = m[j] / mc;
            const double vhat = v[j] / vc;
            w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

namespace {

struct StepEstimate {
    double l[5] = {0, 0, 0, 0, 0};
    double total() const { return l[0] + l[1] + l[2] + l[3] + l[4]; }
};

// One stochastic loss estimate + backward + Adam update over one batch of
// trajectories: a shared horizon p and `anchors_per_step` anchors per
// trajectory, drawn from step_seed so the estimate is a pure function of
// (seed, epoch, step).
StepEstimate train_step(Model& model, AdamState& adam, const Dataset& data,
                        const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                        std::uint64_t step_seed) {
    const std::size_t T = data.T, n = data.grid.n;
    const std::size_t A = std::max<std::size_t>(1, cfg.anchors_per_step);
    const std::size_t rows = batch.size() * A;
    Rng rng(step_seed);
    const auto p = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(cfg.horizon)));

    Tensor uk({rows, n}), ukp({rows, n});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor& states = data.trajectories[batch[i]].states;
        for (std::size_t a = 0; a < A; ++a) {
            const auto k = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(T - 1 - p)));
            std::memcpy(uk.data() + (i * A + a) * n, states.data() + k * n, n * sizeof(double));
            std::memcpy(ukp.data() + (i * A + a) * n, states.data() + (k + p) * n,
                        n * sizeof(double));
        }
    }

    Tape tape;
    TapeModel tm = bind(tape, model);
    Var ukv = constant(tape, std::move(uk));
    Var ukpv = constant(tape, std::move(ukp));
    Var g = outer_encode(tm, ukv);
    Var y = inner_encode(tm, g);
    Var g2 = outer_encode(tm, ukpv);
    Var y2 = inner_encode(tm, g2);
    Var yp = advance(tm, y, static_cast<long long>(p));
    Var l1 = mean_sq_diff(decode(tm, y), ukv);
    Var l2 = mean_sq_diff(decode(tm, yp), ukpv);
    Var l3 = mean_sq_diff(y2, yp);
    Var l4 = mean_sq_diff(outer_decode(tm, g), ukv);
    Var l5 = mean_sq_diff(inner_decode(tm, y), g);
    Var total = add(add(add(l1, l2), add(l3, l4)), l5);

    StepEstimate est;
    est.l[0] = l1.value()[0];
    est.l[1] = l2.value()[0];
    est.l[2] = l3.value()[0];
    est.l[3] = l4.value()[0];
    est.l[4] = l5.value()[0];
    if (!std::isfinite(est.total())) {
        throw Error::numeric("training step produced a non-finite total loss");
    }

    tape.backward(total.id);
    std::vector<Tensor> grads;
    grads.reserve(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        grads.push_back(tape.grad(tm.vars[i].id));
    }
    optimizer_step(model, grads, adam, cfg);
    return est;
}

void append_history_csv(std::ofstream& out, const HistoryRow& row) {
    if (!out.is_open()) return;
    char buf[40];
    out << row.report.epoch << ',' << split_name(row.report.split);
    const double vals[7] = {row.report.loss1, row.report.loss2, row.report.loss3,
                            row.report.loss4, row.report.loss5, row.report.total,
                            row.wall_ms};
    for (double v : vals) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    }
    out << '\n';
    out.flush();
}

}  // namespace

TrainResult train(const Model& init, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& history_csv,
                  const std::function<void(const HistoryRow&)>& progress) {
    if (train_data.trajectories.empty()) throw Error::config("training split is empty");
    if (train_data.grid.n != init.config.n) {
        throw Error::dimension("dataset state dimension " + std::to_string(train_data.grid.n) +
                               " does not match model n=" + std::to_string(init.config.n));
    }
    validate_loss_batch(init.config, train_data.T, train_data.grid.n, cfg.horizon);
    if (!val_data.trajectories.empty()) {
        validate_loss_batch(init.config, val_data.T, val_data.grid.n, cfg.horizon);
    }
    if (cfg.batch_size == 0) throw Error::config("batch size must be >= 1");
    if (!(cfg.lr > 0.0)) throw Error::config("learning rate must be positive");

    TrainResult res;
    res.model = init;
    AdamState adam = make_adam_state(res.model);
    Model last_good = init;

    std::ofstream csv_out;
    if (!history_csv.empty()) {
        csv_out.open(history_csv, std::ios::trunc);
        if (!csv_out) throw Error::io("cannot open loss history file '" + history_csv + "'");
        csv_out << "epoch,split,loss1,loss2,loss3,loss4,loss5,total,wall_ms\n";
    }

    auto persist = [&](const Model& m, const std::string& path) {
        if (!path.empty()) save_checkpoint(m, path);
    };

    auto run_validation = [&](std::size_t epoch) {
        const std::size_t avail = val_data.trajectories.size();
        const std::size_t count =
            cfg.val_subset == 0 ? avail : std::min(cfg.val_subset, avail);
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const double t0 = now_ms();
        LossReport rep = loss_components(res.model, gather_batch(val_data, idx), cfg.horizon);
        rep.epoch = epoch;
        rep.split = Split::val;
        HistoryRow row{rep, now_ms() - t0};
        res.history.push_back(row);
        append_history_csv(csv_out, row);
        if (progress) progress(row);
        if (rep.total < res.best_val) {
            res.best_val = rep.total;
            res.best_epoch = epoch;
            persist(res.model, checkpoint_path.empty() ? "" : checkpoint_path + ".best");
        }
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t0 = now_ms();
        const auto batches =
            batch_indices(train_data.trajectories.size(), cfg.batch_size, cfg.seed, epoch);
        double acc[5] = {0, 0, 0, 0, 0};
        for (std::size_t s = 0; s < batches.size(); ++s) {
            const std::uint64_t step_seed =
                mix_seed(mix_seed(mix_seed(cfg.seed, 0x616e63686fULL), epoch), s);
            StepEstimate est;
            try {
                est = train_step(res.model, adam, train_data, batches[s], cfg, step_seed);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::numeric) {
                    // Divergence: keep the last finished epoch's parameters.
                    persist(last_good, checkpoint_path);
                    throw Error::numeric(
                        std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(s + 1) +
                        (checkpoint_path.empty()
                             ? ""
                             : "; last good parameters saved to '" + checkpoint_path + "'"));
                }
                throw;
            }
            for (int i = 0; i < 5; ++i) acc[i] += est.l[i];
        }
        const auto steps = static_cast<double>(batches.size());
        LossReport rep;
        rep.loss1 = acc[0] / steps;
        rep.loss2 = acc[1] / steps;
        rep.loss3 = acc[2] / steps;
        rep.loss4 = acc[3] / steps;
        rep.loss5 = acc[4] / steps;
        rep.total = rep.loss1 + rep.loss2 + rep.loss3 + rep.loss4 + rep.loss5;
        rep.epoch = epoch;
        rep.split = Split::train;
        HistoryRow row{rep, now_ms() - t0};
        res.history.push_back(row);
        append_history_csv(csv_out, row);
        if (progress) progress(row);

        last_good = res.model;
        const bool validate_now =
            !val_data.trajectories.empty() &&
            (epoch == 1 || epoch == cfg.epochs ||
             (cfg.val_every != 0 && epoch % cfg.val_every == 0));
        if (validate_now) run_validation(epoch);
        if (cfg.checkpoint_every != 0 && epoch % cfg.checkpoint_every == 0) {
            persist(res.model, checkpoint_path);
        }
    }

    persist(res.model, checkpoint_path);
    return res;
}

}  // namespace kae
