#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kae/pde.hpp"
#include "kae/tensor.hpp"

namespace kae {

// Side-by-side rollout table. `reference` and `prediction` are [T x n]; each
// output row holds the time stamp, the n reference values, then the n
// predicted values (1 + 2n columns, 17 significant digits).
void write_rollout_csv(const Tensor& reference, const Tensor& prediction, double dt,
                       const std::string& path);

// Snapshot figure: the initial condition in red, the final-time reference in
// solid blue, the final-time prediction in dashed blue, over the grid domain.
void write_rollout_svg(const Grid& grid, const Tensor& reference, const Tensor& prediction,
                       double t_final, const std::string& path);

// One labelled series of (epoch, total loss) points.
struct LossCurve {
    std::string label;
    std::string color;   // any SVG color string
    bool dashed = false;
    std::vector<std::pair<double, double>> points;
};

// Overlaid training curves on a log10 loss axis, with an inset panel showing
// the trailing `inset_epochs` epochs (clamped to the data; 0 disables).
void write_loss_curves_svg(const std::vector<LossCurve>& curves, std::size_t inset_epochs,
                           const std::string& path);

// One head-count benchmark result. `attention_flops` counts the attention
// core work of a single forward pass, derived from the configuration alone.
struct BenchRow {
    std::size_t heads = 0;
    double median_ms = 0.0;
    std::size_t attention_flops = 0;
    double total_loss = 0.0;
};

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

// Dual-axis figure: median inference time (left axis) and total loss (right
// axis) against head count.
void write_bench_svg(const std::vector<BenchRow>& rows, const std::string& path);

// Final train/validation totals for one outer-block family.
struct CompareEntry {
    std::string block;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Plain-text comparison table (block family, training loss, validation loss)
// with a footer quoting the published full-scale results for the same
// equation. Only burgers and ks have published rows; other kinds are a
// configuration error.
void write_compare_table(const std::vector<CompareEntry>& entries, PDEKind pde,
                         const std::string& path);

}  // namespace kae
