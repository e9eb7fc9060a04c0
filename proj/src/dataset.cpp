#include "kae/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "kae/error.hpp"
#include "kae/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "the KAE1 container is written through host byte order");

namespace kae {
namespace {

constexpr char kMagic[4] = {'K', 'A', 'E', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kSplitSeedStride = 1'000'000;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& value, std::size_t offset, const char* what) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in)
        throw Error::format("truncated dataset file: failed reading " +
                            std::string(what) + " at byte offset " +
                            std::to_string(offset));
}

}  // namespace

ICParams sample_ic_params(ICFamily family, std::uint64_t seed, const Grid& grid) {
    // One stream for the parameter draws, a separate derived seed for the
    // white-noise samples, so every family consumes the same draw count.
    Rng rng(mix_seed(seed, 0));
    ICParams p;
    p.family = family;
    p.seed = mix_seed(seed, 1);
    p.amplitude = rng.uniform(0.2, 1.0);
    // Up to 8 waves across the box, capped by what the grid can resolve.
    const auto k_max = static_cast<std::int64_t>(std::min<std::size_t>(8, grid.n / 8));
    p.wavenumber = static_cast<int>(rng.uniform_int(1, std::max<std::int64_t>(1, k_max)));
    p.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.center = rng.uniform(grid.x_min, grid.x_max);
    p.width = family == ICFamily::gaussian ? rng.uniform(0.2, 1.0)
                                           : rng.uniform(0.5, 2.0);
    return p;
}

const char* split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw Error::parameter("unknown split tag");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw Error::parameter("unknown split '" + name +
                           "' (expected train, val, or test)");
}

std::vector<ICFamily> families_for_split(Split split) {
    if (split == Split::test)
        return {ICFamily::white_noise, ICFamily::sine,     ICFamily::square,
                ICFamily::gaussian,    ICFamily::triangle, ICFamily::sawtooth,
                ICFamily::pulse};
    return {ICFamily::white_noise, ICFamily::sine, ICFamily::square};
}

Dataset generate_split(const DatasetManifest& manifest, Split split) {
    const auto families = families_for_split(split);
    const std::size_t count = split == Split::train ? manifest.train_count
                              : split == Split::val ? manifest.val_count
                                                    : manifest.test_count;
    if (count > 0 && count < families.size())
        throw Error::config(std::string(split_name(split)) + " split of " +
                            std::to_string(count) + " cannot cover all " +
                            std::to_string(families.size()) + " of its families");

    Dataset ds;
    ds.pde = manifest.pde;
    ds.grid = manifest.grid;
    ds.T = manifest.T;
    ds.dt = manifest.dt;
    ds.trajectories.reserve(count);

    const PDESpec spec = default_spec(manifest.pde);
    const std::uint64_t split_base =
        manifest.base_seed +
        kSplitSeedStride * static_cast<std::uint64_t>(split);
    for (std::size_t i = 0; i < count; ++i) {
        const ICFamily family = families[i % families.size()];
        const std::uint64_t seed = split_base + i;
        const ICParams params = sample_ic_params(family, seed, manifest.grid);
        const Tensor ic = generate_ic(params, manifest.grid);
        Trajectory traj = simulate(spec, ic, manifest.grid, manifest.T, manifest.dt);
        traj.ic_kind = family;
        traj.seed = seed;
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error::io("cannot open '" + tmp + "' for writing");
        out.write(kMagic, sizeof(kMagic));
        write_raw(out, kFormatVersion);
        write_raw(out, static_cast<std::uint8_t>(dataset.pde));
        write_raw(out, static_cast<std::uint32_t>(dataset.grid.n));
        write_raw(out, static_cast<std::uint32_t>(dataset.T));
        write_raw(out, dataset.dt);
        write_raw(out, dataset.grid.x_min);
        write_raw(out, dataset.grid.x_max);
        write_raw(out, static_cast<std::uint32_t>(dataset.trajectories.size()));
        for (const Trajectory& traj : dataset.trajectories) {
            if (traj.states.numel() != dataset.T * dataset.grid.n)
                throw Error::dimension(
                    "trajectory shape " + traj.states.shape_string() +
                    " does not match the dataset header [" +
                    std::to_string(dataset.T) + "x" +
                    std::to_string(dataset.grid.n) + "]");
            write_raw(out, static_cast<std::uint8_t>(traj.ic_kind));
            write_raw(out, traj.seed);
            out.write(reinterpret_cast<const char*>(traj.states.data()),
                      static_cast<std::streamsize>(traj.states.numel() *
                                                   sizeof(double)));
        }
        out.flush();
        if (!out) throw Error::io("failed writing dataset to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw Error::io("cannot move '" + tmp + "' into place: " + ec.message());
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open '" + path + "' for reading");

    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path, ec);
    if (ec) throw Error::io("cannot stat '" + path + "': " + ec.message());

    char magic[4] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error::format("'" + path +
                            "' is not a KAE1 dataset (bad magic at byte offset 0)");

    std::uint32_t version = 0;
    read_raw(in, version, 4, "version");
    if (version != kFormatVersion)
        throw Error::format("unsupported dataset version " +
                            std::to_string(version) + " at byte offset 4 " +
                            "(expected " + std::to_string(kFormatVersion) + ")");

    std::uint8_t kind_tag = 0;
    std::uint32_t n = 0, T = 0, count = 0;
    Dataset ds;
    read_raw(in, kind_tag, 8, "pde kind");
    if (kind_tag > 2)
        throw Error::format("invalid pde kind tag " + std::to_string(kind_tag) +
                            " at byte offset 8");
    ds.pde = static_cast<PDEKind>(kind_tag);
    read_raw(in, n, 9, "grid size");
    read_raw(in, T, 13, "timestep count");
    read_raw(in, ds.dt, 17, "dt");
    read_raw(in, ds.grid.x_min, 25, "x_min");
    read_raw(in, ds.grid.x_max, 33, "x_max");
    read_raw(in, count, 41, "trajectory count");
    if (n == 0 || T == 0)
        throw Error::format("degenerate dimensions n=" + std::to_string(n) +
                            " T=" + std::to_string(T) + " at byte offset 9");
    ds.grid.n = n;
    ds.T = T;

    const std::size_t per_traj =
        1 + 8 + static_cast<std::size_t>(T) * n * sizeof(double);
    const std::size_t expected = 45 + static_cast<std::size_t>(count) * per_traj;
    if (file_size != expected)
        throw Error::format("'" + path + "' holds " + std::to_string(file_size) +
                            " bytes but the header at byte offset 41 implies " +
                            std::to_string(expected));

    ds.trajectories.reserve(count);
    std::size_t offset = 45;
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint8_t family_tag = 0;
        read_raw(in, family_tag, offset, "family tag");
        if (family_tag >= kFamilyCount)
            throw Error::format("invalid family tag " +
                                std::to_string(family_tag) + " at byte offset " +
                                std::to_string(offset));
        Trajectory traj;
        traj.ic_kind = static_cast<ICFamily>(family_tag);
        traj.dt = ds.dt;
        read_raw(in, traj.seed, offset + 1, "trajectory seed");
        traj.states = Tensor(std::vector<std::size_t>{ds.T, ds.grid.n});
        in.read(reinterpret_cast<char*>(traj.states.data()),
                static_cast<std::streamsize>(traj.states.numel() * sizeof(double)));
        if (!in)
            throw Error::format("truncated dataset file: failed reading states "
                                "at byte offset " +
                                std::to_string(offset + 9));
        offset += per_traj;
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

std::string manifest_json(const DatasetManifest& manifest) {
    nlohmann::json j;
    j["format"] = "KAE1";
    j["format_version"] = kFormatVersion;
    j["pde"] = pde_name(manifest.pde);
    j["grid"] = {{"n", manifest.grid.n},
                 {"x_min", manifest.grid.x_min},
                 {"x_max", manifest.grid.x_max}};
    j["timesteps"] = manifest.T;
    j["dt"] = manifest.dt;
    j["base_seed"] = manifest.base_seed;
    const Split splits[] = {Split::train, Split::val, Split::test};
    const std::size_t counts[] = {manifest.train_count, manifest.val_count,
                                  manifest.test_count};
    for (std::size_t s = 0; s < 3; ++s) {
        const auto families = families_for_split(splits[s]);
        nlohmann::json shares = nlohmann::json::object();
        for (std::size_t f = 0; f < families.size(); ++f)
            shares[family_name(families[f])] =
                counts[s] / families.size() +
                (f < counts[s] % families.size() ? 1 : 0);
        j["splits"][split_name(splits[s])] = {{"count", counts[s]},
                                              {"families", shares}};
    }
    return j.dump(2) + "\n";
}

void export_trajectory_csv(const Trajectory& trajectory, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    const std::size_t T = trajectory.states.extent(0);
    const std::size_t n = trajectory.states.extent(1);
    char buf[40];
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", trajectory.states.at(t, i));
            out << (i ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw Error::io("failed writing trajectory to '" + path + "'");
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::size_t epoch) {
    if (batch_size == 0) throw Error::parameter("batch size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = count; i > 1; --i) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size) {
        const std::size_t end = std::min(count, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Tensor gather_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    const std::size_t T = dataset.T, n = dataset.grid.n;
    Tensor out(std::vector<std::size_t>{indices.size(), T, n});
    double* dst = out.data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= dataset.trajectories.size())
            throw Error::dimension("batch index " + std::to_string(indices[b]) +
                                   " out of range for " +
                                   std::to_string(dataset.trajectories.size()) +
                                   " trajectories");
        const Tensor& states = dataset.trajectories[indices[b]].states;
        std::copy(states.data(), states.data() + T * n, dst + b * T * n);
    }
    return out;
}

}  // namespace kae
