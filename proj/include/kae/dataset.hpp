#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kae/pde.hpp"
#include "kae/tensor.hpp"

namespace kae {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

// Generation recipe for one dataset: which equation, on what grid, how many
// trajectories per split, all derived deterministically from base_seed.
struct DatasetManifest {
    PDEKind pde = PDEKind::fisher;
    Grid grid;
    std::size_t T = 50;
    double dt = 0.002;
    std::size_t train_count = 2000;
    std::size_t val_count = 500;
    std::size_t test_count = 700;
    std::uint64_t base_seed = 1;
};

struct Dataset {
    PDEKind pde = PDEKind::fisher;
    Grid grid;
    std::size_t T = 0;
    double dt = 0.002;
    std::vector<Trajectory> trajectories;
};

// Train/val draw from the three families the reference training mix uses;
// test additionally covers the four held-out families.
std::vector<ICFamily> families_for_split(Split split);

// Deterministic per-trajectory parameter draw: one stream for the shape
// parameters, a derived seed for white-noise samples.
ICParams sample_ic_params(ICFamily family, std::uint64_t seed, const Grid& grid);

// Families are assigned round-robin, so any count splits as evenly as the
// family list allows (exactly even when divisible). A non-empty split smaller
// than its family list cannot cover every family and is a configuration
// error. Per-trajectory seeds are base_seed + split offset + index.
Dataset generate_split(const DatasetManifest& manifest, Split split);

// Binary container, little-endian: magic "KAE1", u32 version, u8 pde kind,
// u32 n, u32 T, f64 dt, f64 x_min, f64 x_max, u32 trajectory count, then per
// trajectory a u8 family tag, u64 seed, and T*n f64 values row-major. Writes
// go to a temp file renamed into place; reads validate the declared sizes
// against the actual file length and report failures with byte offsets.
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

// JSON description of the manifest plus the per-split family composition.
std::string manifest_json(const DatasetManifest& manifest);

// One row per timestep, n comma-separated columns, 17 significant digits.
void export_trajectory_csv(const Trajectory& trajectory, const std::string& path);

// Deterministic shuffled partition of [0, count): a pure function of
// (shuffle_seed, epoch). Every index appears exactly once; the last batch may
// be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::size_t epoch);

// Stack the selected trajectories into a [batch x T x n] tensor.
Tensor gather_batch(const Dataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace kae
