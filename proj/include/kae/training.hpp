#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "kae/dataset.hpp"
#include "kae/model.hpp"
#include "kae/tape.hpp"
#include "kae/tensor.hpp"

namespace kae {

// Five-term loss breakdown for one batch or epoch. `total` is always the
// plain (unweighted) sum of the five components.
struct LossReport {
    double loss1 = 0.0;  // full reconstruction: u vs decode(encode(u))
    double loss2 = 0.0;  // state prediction: u_{k+p} vs decode(K^p encode(u_k))
    double loss3 = 0.0;  // latent prediction: encode(u_{k+p}) vs K^p encode(u_k)
    double loss4 = 0.0;  // outer-only round trip: u vs (xi+I)((phi+I)u)
    double loss5 = 0.0;  // inner round trip: (phi+I)u vs eta_inv(eta((phi+I)u))
    double total = 0.0;
    std::size_t epoch = 0;
    Split split = Split::train;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 700;
    double lr = 1e-3;
    std::size_t horizon = 8;  // P: losses 2-3 average prediction steps 1..P
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 10.0;           // global gradient-norm ceiling; 0 disables
    std::size_t anchors_per_step = 1;  // gradient-estimate anchors per trajectory
    std::size_t val_every = 25;        // validation cadence; always runs at first/last epoch
    std::size_t val_subset = 64;       // trajectories per cadenced validation; 0 = whole split
    std::size_t checkpoint_every = 0;  // rolling saves of the in-progress model; 0 = off
    std::uint64_t seed = 1;
};

// Exact five-term loss of `model` over a [batch x T x n] trajectory stack.
// Losses 2-3 are averaged over every horizon p = 1..P and every valid anchor
// index; losses 1/4/5 over every timestep. Processes the batch in fixed-size
// chunks to bound memory; per-term sums of squares and element counts are
// accumulated and divided once, so chunking never changes the math.
// Requires 1 <= P <= T-1 (configuration error otherwise).
LossReport loss_components(const Model& model, const Tensor& batch, std::size_t P);

// Tape-mode total loss (the sum loss_components reports) over a small batch:
// the differentiable path used by gradient checks. Builds the whole graph on
// one tape, so large batches belong in loss_components instead.
Var loss_total(const TapeModel& tm, const Tensor& batch, std::size_t P);

// Adam first/second-moment buffers, one slot per parameter tensor in store
// order, plus the shared step counter.
struct AdamState {
    std::size_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam_state(const Model& model);

// One Adam update over gradients indexed like model.params (an empty tensor
// means zero gradient). Applies global-norm clipping at cfg.clip_norm first
// (0 disables). A non-finite gradient raises a numeric error naming the
// offending parameter. Deterministic: identical inputs give identical updates.
void optimizer_step(Model& model, const std::vector<Tensor>& grads, AdamState& state,
                    const TrainConfig& cfg);

// One history line: the losses plus how long the work took.
struct HistoryRow {
    LossReport report;
    double wall_ms = 0.0;
};

struct TrainResult {
    Model model;  // parameters after the final epoch
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;  // epoch of the lowest validation total; 0 if never validated
    double best_val = std::numeric_limits<double>::infinity();
};

// Full training loop. Per epoch: deterministic shuffled batches; for each
// batch one stochastic estimate of the five-term loss (a shared random
// horizon p in 1..P and `anchors_per_step` random anchors per trajectory,
// all drawn from (seed, epoch, step) so runs are reproducible regardless of
// thread count), backward pass, clipped Adam update. Train-split history
// rows are epoch means of those per-step estimates; validation rows are the
// exact loss on the first `val_subset` validation trajectories, computed at
// epoch 1, every `val_every` epochs, and the final epoch.
//
// When checkpoint_path is non-empty the final model is saved there, and the
// best-validation model to checkpoint_path + ".best". When history_csv is
// non-empty rows are appended as they are produced (header: epoch, split,
// loss1..loss5, total, wall_ms; 17 significant digits).
//
// A non-finite loss or gradient aborts with a numeric error after writing
// the last finished epoch's parameters to checkpoint_path. epochs = 0 saves
// the initial model and returns an empty history. `progress`, when set, is
// called with each history row as it is produced (train row first, then the
// validation row on validation epochs).
TrainResult train(const Model& init, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& cfg, const std::string& checkpoint_path = "",
                  const std::string& history_csv = "",
                  const std::function<void(const HistoryRow&)>& progress = {});

}  // namespace kae
