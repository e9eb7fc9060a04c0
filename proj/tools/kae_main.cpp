// Command-line front end: dataset generation, training, evaluation, rollout,
// spectra, head-count benchmarks, and outer-block comparisons. Every
// subcommand writes its fully resolved configuration next to its outputs so a
// run can be reproduced from the artifacts alone.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kae/dataset.hpp"
#include "kae/error.hpp"
#include "kae/model.hpp"
#include "kae/reports.hpp"
#include "kae/spectral.hpp"
#include "kae/tape.hpp"
#include "kae/training.hpp"

namespace {

using namespace kae;

void make_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error::io("cannot create directory '" + dir + "': " + ec.message());
}

void make_parent_dir(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) make_dir(parent.string());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error::io("failed writing '" + path + "'");
}

void write_resolved_config(const CLI::App& sub, const std::string& path) {
    write_text(path, sub.config_to_str(true, true));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                          (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

void require_set(const std::string& value, const char* flag) {
    if (value.empty()) throw Error::config(std::string("missing required option ") + flag);
}

// Fill options the command line left unset from a flat "key = value" file
// ('#' starts a comment, [a, b] is a list). The syntax matches the resolved
// config each run writes next to its outputs, so a dumped config replays the
// run; explicit command-line flags always win over file values.
void apply_config(CLI::App& sub, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped;
        char quote = 0;
        for (char ch : line) {
            if (quote != 0) {
                stripped += ch;
                if (ch == quote) quote = 0;
            } else if (ch == '"' || ch == '\'') {
                quote = ch;
                stripped += ch;
            } else if (ch == '#') {
                break;
            } else {
                stripped += ch;
            }
        }
        const std::string entry = trim(stripped);
        if (entry.empty()) continue;
        const std::string where = "config file " + path + " line " + std::to_string(lineno);
        const auto eq = entry.find('=');
        if (eq == std::string::npos) throw Error::config(where + ": expected key = value");
        const std::string key = trim(entry.substr(0, eq));
        const std::string value = trim(entry.substr(eq + 1));
        if (key.empty()) throw Error::config(where + ": empty key");
        if (key == "config") continue;  // a dumped config names its own source
        CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr)
            throw Error::config(where + ": unknown key '" + key + "' for subcommand '" +
                                sub.get_name() + "'");
        if (opt->count() > 0) continue;
        std::vector<std::string> items;
        if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
            std::string cur;
            for (char ch : value.substr(1, value.size() - 2)) {
                if (ch == ',') {
                    items.push_back(cur);
                    cur.clear();
                } else {
                    cur += ch;
                }
            }
            if (!trim(cur).empty()) items.push_back(cur);
        } else {
            items.push_back(value);
        }
        if (items.empty()) continue;
        for (const auto& item : items) opt->add_result(unquote(trim(item)));
        opt->run_callback();
    }
}

void print_history_row(const HistoryRow& row) {
    const LossReport& r = row.report;
    std::printf(
        "epoch %4zu  %-5s  total %.8e  l1 %.3e  l2 %.3e  l3 %.3e  l4 %.3e  l5 %.3e  (%.0f ms)\n",
        r.epoch, split_name(r.split), r.total, r.loss1, r.loss2, r.loss3, r.loss4, r.loss5,
        row.wall_ms);
    std::fflush(stdout);
}

// Reference-style display names for table rows and figure legends.
const char* block_display_name(BlockKind kind) {
    switch (kind) {
        case BlockKind::transres: return "TransRes";
        case BlockKind::denseres: return "DenseRes";
        case BlockKind::convres: return "ConvRes";
    }
    return "?";
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------- gen-data --

struct GenDataOpts {
    std::string pde = "fisher";
    std::size_t train = 2000, val = 500, test = 700;
    std::uint64_t seed = 1;
    std::size_t timesteps = 50;
    double dt = 0.002;
    std::size_t points = 128;
    std::string out;
    std::string config;
};

void run_gen_data(const CLI::App& sub, const GenDataOpts& o) {
    require_set(o.out, "--out");
    if (o.dt <= 0.0) throw Error::config("save interval must be positive");
    if (o.timesteps < 2) throw Error::config("need at least 2 timesteps per trajectory");
    DatasetManifest man;
    man.pde = pde_from_name(o.pde);
    man.grid = default_grid(man.pde);
    man.grid.n = o.points;
    man.T = o.timesteps;
    man.dt = o.dt;
    man.train_count = o.train;
    man.val_count = o.val;
    man.test_count = o.test;
    man.base_seed = o.seed;

    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");
    write_text(o.out + "/manifest.json", manifest_json(man));
    for (Split split : {Split::train, Split::val, Split::test}) {
        Dataset d = generate_split(man, split);
        const std::string path = o.out + "/" + split_name(split) + ".kae";
        write_dataset(d, path);
        std::printf("wrote %s (%zu trajectories, T=%zu, n=%zu)\n", path.c_str(),
                    d.trajectories.size(), d.T, d.grid.n);
    }
}

// ------------------------------------------------------------------- train --

struct TrainOpts {
    std::string data, block = "transres", ckpt, history, config;
    std::size_t heads = 32, rank = 21, d_model = 64, depth = 1;
    std::size_t epochs = 700, batch = 32, horizon = 8;
    double lr = 1e-3, clip = 10.0;
    std::size_t anchors = 1, val_every = 25, val_subset = 64, checkpoint_every = 0;
    std::uint64_t seed = 1;
};

void run_train(const CLI::App& sub, const TrainOpts& o) {
    require_set(o.data, "--data");
    require_set(o.ckpt, "--ckpt");
    Dataset train_data = read_dataset(o.data + "/train.kae");
    Dataset val_data = read_dataset(o.data + "/val.kae");

    ModelConfig mc;
    mc.n = train_data.grid.n;
    mc.r = o.rank;
    mc.block = block_from_name(o.block);
    mc.d_model = o.d_model;
    mc.heads = o.heads;
    mc.depth = o.depth;
    mc.validate();

    TrainConfig tc;
    tc.batch_size = o.batch;
    tc.epochs = o.epochs;
    tc.lr = o.lr;
    tc.horizon = o.horizon;
    tc.clip_norm = o.clip;
    tc.anchors_per_step = o.anchors;
    tc.val_every = o.val_every;
    tc.val_subset = o.val_subset;
    tc.checkpoint_every = o.checkpoint_every;
    tc.seed = o.seed;

    make_parent_dir(o.ckpt);
    write_resolved_config(sub, o.ckpt + ".config.txt");
    const std::string history = o.history.empty() ? o.ckpt + ".history.csv" : o.history;

    Model init = init_model(mc, o.seed);
    std::printf("training %s (n=%zu, r=%zu) on %zu trajectories for %zu epochs\n",
                block_name(mc.block), mc.n, mc.r, train_data.trajectories.size(), o.epochs);
    TrainResult res = train(init, train_data, val_data, tc, o.ckpt, history, print_history_row);
    std::printf("saved final model to %s (history: %s)\n", o.ckpt.c_str(), history.c_str());
    if (res.best_epoch != 0) {
        std::printf("best validation total %.8e at epoch %zu (saved to %s.best)\n", res.best_val,
                    res.best_epoch, o.ckpt.c_str());
    }
}

// -------------------------------------------------------------------- eval --

struct EvalOpts {
    std::string ckpt, data, split = "test", family, out, config;
    std::size_t horizon = 8;
};

void run_eval(const CLI::App& sub, const EvalOpts& o) {
    require_set(o.ckpt, "--ckpt");
    require_set(o.data, "--data");
    require_set(o.out, "--out");
    Model m = load_checkpoint(o.ckpt);
    const Split split = split_from_name(o.split);
    Dataset d = read_dataset(o.data + "/" + std::string(split_name(split)) + ".kae");
    if (d.trajectories.empty())
        throw Error::config("split '" + std::string(split_name(split)) + "' is empty");

    std::array<std::vector<std::size_t>, kFamilyCount> by_family;
    for (std::size_t i = 0; i < d.trajectories.size(); ++i)
        by_family[static_cast<std::size_t>(d.trajectories[i].ic_kind)].push_back(i);

    std::vector<ICFamily> families;
    if (!o.family.empty()) {
        const ICFamily f = family_from_name(o.family);
        if (by_family[static_cast<std::size_t>(f)].empty())
            throw Error::config("initial-condition family '" + o.family +
                                "' is not present in split '" + split_name(split) + "'");
        families.push_back(f);
    } else {
        for (std::size_t f = 0; f < kFamilyCount; ++f)
            if (!by_family[f].empty()) families.push_back(static_cast<ICFamily>(f));
    }

    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");

    std::ofstream csv(o.out + "/eval_report.csv");
    if (!csv) throw Error::io("cannot open '" + o.out + "/eval_report.csv' for writing");
    csv << "family,count,loss1,loss2,loss3,loss4,loss5,total\n";
    std::printf("%-12s %6s  %-12s %-12s %-12s %-12s %-12s %-12s\n", "family", "count", "loss1",
                "loss2", "loss3", "loss4", "loss5", "total");
    auto emit = [&](const std::string& label, const std::vector<std::size_t>& idx) {
        const LossReport rep = loss_components(m, gather_batch(d, idx), o.horizon);
        std::printf("%-12s %6zu  %-12.6e %-12.6e %-12.6e %-12.6e %-12.6e %-12.6e\n", label.c_str(),
                    idx.size(), rep.loss1, rep.loss2, rep.loss3, rep.loss4, rep.loss5, rep.total);
        char buf[40];
        csv << label << ',' << idx.size();
        for (double v : {rep.loss1, rep.loss2, rep.loss3, rep.loss4, rep.loss5, rep.total}) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            csv << ',' << buf;
        }
        csv << '\n';
    };

    std::vector<std::size_t> evaluated;
    for (ICFamily f : families) {
        const auto& idx = by_family[static_cast<std::size_t>(f)];
        emit(family_name(f), idx);
        evaluated.insert(evaluated.end(), idx.begin(), idx.end());
    }
    std::sort(evaluated.begin(), evaluated.end());
    emit("overall", evaluated);
    csv.flush();
    if (!csv) throw Error::io("failed writing '" + o.out + "/eval_report.csv'");
}

// ----------------------------------------------------------------- rollout --

struct RolloutOpts {
    std::string ckpt, family = "sine", pde = "fisher", out, config;
    std::uint64_t seed = 1;
    std::size_t timesteps = 50;
    double dt = 0.002;
};

void run_rollout(const CLI::App& sub, const RolloutOpts& o) {
    require_set(o.ckpt, "--ckpt");
    require_set(o.out, "--out");
    Model m = load_checkpoint(o.ckpt);
    const PDEKind pde = pde_from_name(o.pde);
    const ICFamily family = family_from_name(o.family);
    if (o.timesteps < 2) throw Error::config("rollout needs at least 2 timesteps");
    if (o.dt <= 0.0) throw Error::config("save interval must be positive");

    Grid grid = default_grid(pde);
    grid.n = m.config.n;
    const ICParams params = sample_ic_params(family, o.seed, grid);
    const Tensor ic = generate_ic(params, grid);
    const Trajectory ref = simulate(default_spec(pde), ic, grid, o.timesteps, o.dt);
    const Tensor pred = predict_rollout(m, ic, o.timesteps - 1);

    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");
    const double t_final = static_cast<double>(o.timesteps - 1) * o.dt;
    write_rollout_csv(ref.states, pred, o.dt, o.out + "/rollout.csv");
    write_rollout_svg(grid, ref.states, pred, t_final, o.out + "/rollout.svg");

    const std::size_t n = grid.n;
    const double* rT = ref.states.values().data() + (o.timesteps - 1) * n;
    const double* pT = pred.values().data() + (o.timesteps - 1) * n;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        num += (pT[j] - rT[j]) * (pT[j] - rT[j]);
        den += rT[j] * rT[j];
    }
    const double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    std::printf("%s rollout, %s initial condition (seed %llu): %zu steps of dt=%g\n",
                pde_name(pde), family_name(family), static_cast<unsigned long long>(o.seed),
                o.timesteps - 1, o.dt);
    std::printf("relative L2 error at t=%g: %.6e\n", t_final, rel);
    std::printf("wrote %s/rollout.csv and %s/rollout.svg\n", o.out.c_str(), o.out.c_str());
}

// --------------------------------------------------------------------- eig --

struct EigOpts {
    std::string ckpt, out, config;
};

void run_eig(const CLI::App& sub, const EigOpts& o) {
    require_set(o.ckpt, "--ckpt");
    require_set(o.out, "--out");
    Model m = load_checkpoint(o.ckpt);
    const EigenSpectrum spectrum = eigenvalues(m.params.at("K"));
    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");
    write_spectrum_csv(spectrum, o.out + "/spectrum.csv");
    write_spectrum_svg(spectrum, o.out + "/spectrum.svg");
    std::printf("%zu eigenvalues; largest modulus %.17g\n", spectrum.values.size(),
                std::abs(spectrum.values.front()));
    std::printf("wrote %s/spectrum.csv and %s/spectrum.svg\n", o.out.c_str(), o.out.c_str());
}

// ------------------------------------------------------------- bench-heads --

struct BenchOpts {
    std::vector<std::size_t> heads{2, 4, 8, 16, 32};
    std::size_t repeats = 5;
    std::string data, out, config;
    std::size_t train_epochs = 0;
    std::uint64_t seed = 1;
    std::size_t d_model = 64, rank = 21, batch = 32, horizon = 8;
};

void run_bench(const CLI::App& sub, const BenchOpts& o) {
    require_set(o.data, "--data");
    require_set(o.out, "--out");
    if (o.heads.empty()) throw Error::config("need at least one head count");
    if (o.repeats == 0) throw Error::config("need at least one timing repeat");
    for (std::size_t h : o.heads) {
        if (h == 0 || o.d_model % h != 0)
            throw Error::config("head count " + std::to_string(h) +
                                " does not divide embedding width " + std::to_string(o.d_model));
    }
    Dataset d = read_dataset(o.data + "/train.kae");
    if (d.trajectories.empty()) throw Error::config("benchmark dataset is empty");
    const std::size_t n = d.grid.n;
    const std::size_t B = std::min(o.batch, d.trajectories.size());
    if (B == 0) throw Error::config("batch size must be positive");

    // Timing batch: one state row per trajectory.
    Tensor timing_batch({B, n});
    for (std::size_t i = 0; i < B; ++i)
        std::memcpy(timing_batch.data() + i * n, d.trajectories[i].states.values().data(),
                    n * sizeof(double));
    // Loss subset: a handful of full trajectories.
    std::vector<std::size_t> loss_idx(std::min<std::size_t>(8, d.trajectories.size()));
    for (std::size_t i = 0; i < loss_idx.size(); ++i) loss_idx[i] = i;
    const Tensor loss_batch = gather_batch(d, loss_idx);
    const std::size_t P = std::min(o.horizon, d.T - 1);

    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");

    std::vector<BenchRow> rows;
    std::printf("%6s  %12s  %16s  %14s\n", "heads", "median_ms", "attention_flops", "total_loss");
    for (std::size_t h : o.heads) {
        ModelConfig mc;
        mc.n = n;
        mc.r = o.rank;
        mc.block = BlockKind::transres;
        mc.d_model = o.d_model;
        mc.heads = h;
        mc.validate();
        Model m = init_model(mc, o.seed);
        if (o.train_epochs > 0) {
            TrainConfig tc;
            tc.batch_size = B;
            tc.epochs = o.train_epochs;
            tc.horizon = P;
            tc.val_every = 0;
            tc.seed = o.seed;
            m = train(m, d, Dataset{}, tc).model;
        }

        // The configuration predicts the attention work of one forward pass;
        // the tape's per-operation counter must agree exactly.
        const std::size_t derived =
            2 * mc.depth * attention_core_flops(B, n, mc.d_model, mc.heads);
        {
            Tape tape;
            TapeModel tm = bind(tape, m);
            Var y = encode(tm, constant(tape, timing_batch));
            (void)decode(tm, advance(tm, y, 1));
            const std::size_t measured = tape.flops_for("attention");
            if (measured != derived)
                throw Error::numeric("attention flop count mismatch at " + std::to_string(h) +
                                     " heads: derived " + std::to_string(derived) +
                                     ", measured " + std::to_string(measured));
        }

        auto forward = [&] { (void)decode(m, advance(m, encode(m, timing_batch), 1)); };
        for (int w = 0; w < 3; ++w) forward();
        std::vector<double> ms(o.repeats);
        for (std::size_t i = 0; i < o.repeats; ++i) {
            const double t0 = now_ms();
            forward();
            ms[i] = now_ms() - t0;
        }
        std::sort(ms.begin(), ms.end());
        const double median = o.repeats % 2 == 1
                                  ? ms[o.repeats / 2]
                                  : 0.5 * (ms[o.repeats / 2 - 1] + ms[o.repeats / 2]);
        const double loss = loss_components(m, loss_batch, P).total;
        rows.push_back({h, median, derived, loss});
        std::printf("%6zu  %12.3f  %16zu  %14.6e\n", h, median, derived, loss);
        std::fflush(stdout);
    }
    write_bench_csv(rows, o.out + "/bench.csv");
    write_bench_svg(rows, o.out + "/bench.svg");
    std::printf("wrote %s/bench.csv and %s/bench.svg\n", o.out.c_str(), o.out.c_str());
    std::printf("losses are desk-scale (%zu short trajectories); timings vary run to run\n",
                loss_idx.size());
}

// ---------------------------------------------------------- compare-blocks --

struct CompareOpts {
    std::string pde, out, config;
    std::size_t epochs = 40, train = 96, val = 32, batch = 32, horizon = 8, val_every = 10;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    std::size_t rank = 21, d_model = 64, heads = 32;
};

void run_compare(const CLI::App& sub, const CompareOpts& o) {
    require_set(o.pde, "--pde");
    require_set(o.out, "--out");
    const PDEKind pde = pde_from_name(o.pde);
    if (pde == PDEKind::fisher)
        throw Error::config("compare-blocks supports burgers or ks only");
    if (o.epochs == 0) throw Error::config("compare-blocks needs at least one epoch");
    if (o.val == 0) throw Error::config("compare-blocks needs a validation split");
    const BlockKind alt = pde == PDEKind::burgers ? BlockKind::denseres : BlockKind::convres;

    DatasetManifest man;
    man.pde = pde;
    man.grid = default_grid(pde);
    man.train_count = o.train;
    man.val_count = o.val;
    man.test_count = 0;
    man.base_seed = o.seed;
    std::printf("generating %zu train / %zu val %s trajectories\n", o.train, o.val,
                pde_name(pde));
    const Dataset train_d = generate_split(man, Split::train);
    const Dataset val_d = generate_split(man, Split::val);

    make_dir(o.out);
    write_resolved_config(sub, o.out + "/config.txt");

    const char* colors[2] = {"#2563c9", "#c0392b"};
    std::vector<CompareEntry> entries;
    std::vector<LossCurve> curves;
    for (int bi = 0; bi < 2; ++bi) {
        const BlockKind blk = bi == 0 ? BlockKind::transres : alt;
        ModelConfig mc;
        mc.n = man.grid.n;
        mc.r = o.rank;
        mc.block = blk;
        mc.d_model = o.d_model;
        mc.heads = o.heads;
        mc.validate();

        TrainConfig tc;
        tc.batch_size = o.batch;
        tc.epochs = o.epochs;
        tc.lr = o.lr;
        tc.horizon = o.horizon;
        tc.val_every = o.val_every;
        tc.val_subset = 0;  // exact validation; the desk-scale split is small
        tc.seed = o.seed;

        const std::string base = o.out + "/" + block_name(blk);
        std::printf("training %s for %zu epochs (identical data and seed)\n",
                    block_display_name(blk), o.epochs);
        const TrainResult res = train(init_model(mc, o.seed), train_d, val_d, tc, base + ".kaec",
                                      base + "_history.csv", print_history_row);

        double final_train = 0.0, final_val = 0.0;
        for (const auto& row : res.history) {
            if (row.report.split == Split::train) final_train = row.report.total;
            if (row.report.split == Split::val) final_val = row.report.total;
        }
        entries.push_back({block_display_name(blk), final_train, final_val});

        LossCurve train_curve{std::string(block_display_name(blk)) + " train", colors[bi], false,
                              {}};
        LossCurve val_curve{std::string(block_display_name(blk)) + " val", colors[bi], true, {}};
        for (const auto& row : res.history) {
            auto& curve = row.report.split == Split::train ? train_curve : val_curve;
            curve.points.emplace_back(static_cast<double>(row.report.epoch), row.report.total);
        }
        curves.push_back(std::move(train_curve));
        curves.push_back(std::move(val_curve));
    }

    write_compare_table(entries, pde, o.out + "/comparison.txt");
    write_loss_curves_svg(curves, 100, o.out + "/loss_curves.svg");

    std::ifstream table(o.out + "/comparison.txt");
    std::cout << table.rdbuf();
    std::printf("\nwrote %s/comparison.txt and %s/loss_curves.svg\n", o.out.c_str(),
                o.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman autoencoder pipeline for 1-D PDE surrogates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "kae 0.1.0");

    auto configure = [](CLI::App* sub, std::string& slot) {
        sub->add_option("--config", slot, "read unset options from a key = value file");
    };

    GenDataOpts g;
    CLI::App* gen = app.add_subcommand("gen-data", "simulate PDE trajectories into a dataset");
    configure(gen, g.config);
    gen->add_option("--pde", g.pde, "equation: fisher, burgers, or ks")->capture_default_str();
    gen->add_option("--train", g.train, "training trajectories")->capture_default_str();
    gen->add_option("--val", g.val, "validation trajectories")->capture_default_str();
    gen->add_option("--test", g.test, "test trajectories")->capture_default_str();
    gen->add_option("--seed", g.seed, "base seed for every draw")->capture_default_str();
    gen->add_option("--timesteps", g.timesteps, "saved states per trajectory")
        ->capture_default_str();
    gen->add_option("--dt", g.dt, "save interval in seconds")->capture_default_str();
    gen->add_option("--points", g.points, "grid points")->capture_default_str();
    gen->add_option("--out", g.out, "output directory");
    gen->callback([&] {
        apply_config(*gen, g.config);
        run_gen_data(*gen, g);
    });

    TrainOpts t;
    CLI::App* tr = app.add_subcommand("train", "train an autoencoder on a generated dataset");
    configure(tr, t.config);
    tr->add_option("--data", t.data, "dataset directory from gen-data");
    tr->add_option("--block", t.block, "outer block: transres, denseres, or convres")
        ->capture_default_str();
    tr->add_option("--heads", t.heads, "attention heads (transres)")->capture_default_str();
    tr->add_option("--rank", t.rank, "latent dimension r")->capture_default_str();
    tr->add_option("--d-model", t.d_model, "token embedding width")->capture_default_str();
    tr->add_option("--depth", t.depth, "outer blocks per encoder/decoder")->capture_default_str();
    tr->add_option("--epochs", t.epochs, "training epochs")->capture_default_str();
    tr->add_option("--batch", t.batch, "trajectories per step")->capture_default_str();
    tr->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
    tr->add_option("--horizon", t.horizon, "prediction horizon P")->capture_default_str();
    tr->add_option("--clip", t.clip, "gradient-norm ceiling, 0 disables")->capture_default_str();
    tr->add_option("--anchors", t.anchors, "loss anchors per trajectory per step")
        ->capture_default_str();
    tr->add_option("--val-every", t.val_every, "validation cadence in epochs")
        ->capture_default_str();
    tr->add_option("--val-subset", t.val_subset, "trajectories per validation, 0 = whole split")
        ->capture_default_str();
    tr->add_option("--checkpoint-every", t.checkpoint_every,
                   "rolling checkpoint cadence, 0 disables")
        ->capture_default_str();
    tr->add_option("--seed", t.seed, "initialization and shuffling seed")->capture_default_str();
    tr->add_option("--ckpt", t.ckpt, "checkpoint output path");
    tr->add_option("--history", t.history, "loss-history CSV path (default: <ckpt>.history.csv)");
    tr->callback([&] {
        apply_config(*tr, t.config);
        run_train(*tr, t);
    });

    EvalOpts e;
    CLI::App* ev = app.add_subcommand("eval", "report the five losses per IC family");
    configure(ev, e.config);
    ev->add_option("--ckpt", e.ckpt, "checkpoint to evaluate");
    ev->add_option("--data", e.data, "dataset directory");
    ev->add_option("--split", e.split, "train, val, or test")->capture_default_str();
    ev->add_option("--family", e.family, "restrict to one IC family");
    ev->add_option("--horizon", e.horizon, "prediction horizon P")->capture_default_str();
    ev->add_option("--out", e.out, "report directory");
    ev->callback([&] {
        apply_config(*ev, e.config);
        run_eval(*ev, e);
    });

    RolloutOpts r;
    CLI::App* ro = app.add_subcommand("rollout", "roll one initial condition forward and compare");
    configure(ro, r.config);
    ro->add_option("--ckpt", r.ckpt, "checkpoint to roll out");
    ro->add_option("--ic-family", r.family, "initial-condition family")->capture_default_str();
    ro->add_option("--seed", r.seed, "initial-condition seed")->capture_default_str();
    ro->add_option("--pde", r.pde, "reference equation")->capture_default_str();
    ro->add_option("--timesteps", r.timesteps, "states including the initial one")
        ->capture_default_str();
    ro->add_option("--dt", r.dt, "save interval in seconds")->capture_default_str();
    ro->add_option("--out", r.out, "output directory");
    ro->callback([&] {
        apply_config(*ro, r.config);
        run_rollout(*ro, r);
    });

    EigOpts ei;
    CLI::App* eg = app.add_subcommand("eig", "eigenvalue spectrum of the dynamics matrix");
    configure(eg, ei.config);
    eg->add_option("--ckpt", ei.ckpt, "checkpoint to analyze");
    eg->add_option("--out", ei.out, "output directory");
    eg->callback([&] {
        apply_config(*eg, ei.config);
        run_eig(*eg, ei);
    });

    BenchOpts b;
    CLI::App* bh = app.add_subcommand("bench-heads", "inference time and loss across head counts");
    configure(bh, b.config);
    bh->add_option("--heads", b.heads, "head counts to sweep")
        ->delimiter(',')
        ->capture_default_str();
    bh->add_option("--repeats", b.repeats, "timed repetitions per head count")
        ->capture_default_str();
    bh->add_option("--data", b.data, "dataset directory");
    bh->add_option("--train-epochs", b.train_epochs, "short-train before measuring, 0 = none")
        ->capture_default_str();
    bh->add_option("--seed", b.seed, "initialization seed")->capture_default_str();
    bh->add_option("--d-model", b.d_model, "token embedding width")->capture_default_str();
    bh->add_option("--rank", b.rank, "latent dimension r")->capture_default_str();
    bh->add_option("--batch", b.batch, "inference batch size")->capture_default_str();
    bh->add_option("--horizon", b.horizon, "prediction horizon for the loss column")
        ->capture_default_str();
    bh->add_option("--out", b.out, "output directory");
    bh->callback([&] {
        apply_config(*bh, b.config);
        run_bench(*bh, b);
    });

    CompareOpts c;
    CLI::App* cb = app.add_subcommand("compare-blocks",
                                      "train two outer-block families on identical data");
    configure(cb, c.config);
    cb->add_option("--pde", c.pde, "burgers (vs DenseRes) or ks (vs ConvRes)");
    cb->add_option("--epochs", c.epochs, "training epochs per block")->capture_default_str();
    cb->add_option("--train", c.train, "training trajectories to generate")
        ->capture_default_str();
    cb->add_option("--val", c.val, "validation trajectories to generate")->capture_default_str();
    cb->add_option("--batch", c.batch, "trajectories per step")->capture_default_str();
    cb->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    cb->add_option("--horizon", c.horizon, "prediction horizon P")->capture_default_str();
    cb->add_option("--val-every", c.val_every, "validation cadence in epochs")
        ->capture_default_str();
    cb->add_option("--seed", c.seed, "data, initialization, and shuffling seed")
        ->capture_default_str();
    cb->add_option("--rank", c.rank, "latent dimension r")->capture_default_str();
    cb->add_option("--d-model", c.d_model, "token embedding width")->capture_default_str();
    cb->add_option("--heads", c.heads, "attention heads (TransRes)")->capture_default_str();
    cb->add_option("--out", c.out, "output directory");
    cb->callback([&] {
        apply_config(*cb, c.config);
        run_compare(*cb, c);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);  // prints the message; flag problems are config errors
        return 2;
    } catch (const kae::Error& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kae::exit_code_for(ex.kind());
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
