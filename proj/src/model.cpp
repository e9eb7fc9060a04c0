#include "kae/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>

#include "kae/error.hpp"
#include "kae/kernels.hpp"
#include "kae/rng.hpp"

namespace kae {

const char* block_name(BlockKind kind) {
    switch (kind) {
        case BlockKind::transres: return "transres";
        case BlockKind::denseres: return "denseres";
        case BlockKind::convres: return "convres";
    }
    throw Error::parameter("unknown block kind");
}

BlockKind block_from_name(const std::string& name) {
    if (name == "transres") return BlockKind::transres;
    if (name == "denseres") return BlockKind::denseres;
    if (name == "convres") return BlockKind::convres;
    throw Error::parameter("unknown block '" + name +
                           "' (expected transres, denseres, or convres)");
}

void ModelConfig::validate() const {
    if (n == 0) throw Error::config("state dimension must be positive");
    if (r == 0 || r >= n) {
        throw Error::config("latent rank must satisfy 0 < r < n, got r=" + std::to_string(r) +
                            ", n=" + std::to_string(n));
    }
    if (depth == 0) throw Error::config("block depth must be at least 1");
    if (block == BlockKind::transres) {
        if (d_model == 0) throw Error::config("d_model must be positive");
        if (heads == 0 || d_model % heads != 0) {
            throw Error::config("attention head count " + std::to_string(heads) +
                                " must divide d_model " + std::to_string(d_model));
        }
    }
    if (block == BlockKind::convres && n % 8 != 0) {
        throw Error::config("conv block needs n divisible by 8 (three pooling stages), got n=" +
                            std::to_string(n));
    }
}

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    if (index_.count(name) != 0) throw Error::parameter("duplicate parameter '" + name + "'");
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(value));
    return tensors_.back();
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error::parameter("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error::parameter("unknown parameter '" + name + "'");
    return tensors_[it->second];
}

std::size_t ParamStore::scalar_count() const {
    std::size_t total = 0;
    for (const Tensor& t : tensors_) total += t.numel();
    return total;
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void add_uniform(ParamStore& ps, std::uint64_t seed, const std::string& name,
                 std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    Rng rng(mix_seed(seed, fnv1a64(name)));
    const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-s, s);
    ps.add(name, std::move(t));
}

void add_zeros(ParamStore& ps, const std::string& name, std::vector<std::size_t> shape) {
    ps.add(name, Tensor::zeros(std::move(shape)));
}

void add_ones(ParamStore& ps, const std::string& name, std::vector<std::size_t> shape) {
    ps.add(name, Tensor::full(std::move(shape), 1.0));
}

// One outer block's parameters. Final projections start at zero so the block
// output is exactly zero and the residual shortcut makes phi+I the identity.
void add_block_params(ParamStore& ps, const ModelConfig& cfg, std::uint64_t seed,
                      const std::string& p) {
    switch (cfg.block) {
        case BlockKind::transres: {
            const std::size_t d = cfg.d_model, f = cfg.ff(), n = cfg.n;
            add_uniform(ps, seed, p + ".emb.w", {1, d}, 1);
            add_zeros(ps, p + ".emb.b", {d});
            add_uniform(ps, seed, p + ".pos", {n, d}, d);
            for (const char* w : {"wq", "wk", "wv", "wo"}) {
                add_uniform(ps, seed, p + ".attn." + w, {d, d}, d);
            }
            for (const char* b : {"bq", "bk", "bv", "bo"}) {
                add_zeros(ps, p + ".attn." + b, {d});
            }
            add_ones(ps, p + ".ln1.g", {d});
            add_zeros(ps, p + ".ln1.b", {d});
            add_uniform(ps, seed, p + ".ff.w1", {d, f}, d);
            add_zeros(ps, p + ".ff.b1", {f});
            add_uniform(ps, seed, p + ".ff.w2", {f, d}, f);
            add_zeros(ps, p + ".ff.b2", {d});
            add_ones(ps, p + ".ln2.g", {d});
            add_zeros(ps, p + ".ln2.b", {d});
            add_zeros(ps, p + ".readout.w", {d, 1});
            add_zeros(ps, p + ".readout.b", {1});
            break;
        }
        case BlockKind::denseres: {
            const std::size_t n = cfg.n;
            for (int i = 1; i <= 4; ++i) {
                const std::string layer = p + ".dense" + std::to_string(i);
                if (i == 4) {
                    add_zeros(ps, layer + ".w", {n, n});
                } else {
                    add_uniform(ps, seed, layer + ".w", {n, n}, n);
                }
                add_zeros(ps, layer + ".b", {n});
            }
            break;
        }
        case BlockKind::convres: {
            const std::size_t channels[5] = {1, 8, 16, 32, 64};
            const std::size_t ksz = 4;
            for (int i = 0; i < 4; ++i) {
                const std::string layer = p + ".conv" + std::to_string(i + 1);
                add_uniform(ps, seed, layer + ".w", {channels[i + 1], channels[i], ksz},
                            channels[i] * ksz);
                add_zeros(ps, layer + ".b", {channels[i + 1]});
            }
            add_zeros(ps, p + ".out.w", {64 * (cfg.n / 8), cfg.n});
            add_zeros(ps, p + ".out.b", {cfg.n});
            break;
        }
    }
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    for (std::size_t i = 0; i < config.depth; ++i) {
        add_block_params(m.params, config, seed, "phi" + std::to_string(i));
    }

    // eta: orthonormal columns via modified Gram-Schmidt on Gaussian draws.
    const std::size_t n = config.n, r = config.r;
    Rng rng(mix_seed(seed, fnv1a64("eta.w")));
    std::vector<std::vector<double>> cols(r, std::vector<double>(n));
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < n; ++i) cols[j][i] = rng.normal();
        for (std::size_t prev = 0; prev < j; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += cols[prev][i] * cols[j][i];
            for (std::size_t i = 0; i < n; ++i) cols[j][i] -= proj * cols[prev][i];
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += cols[j][i] * cols[j][i];
        norm = std::sqrt(norm);
        if (norm < 1e-10) throw Error::numeric("eta initialization is rank deficient");
        for (std::size_t i = 0; i < n; ++i) cols[j][i] /= norm;
    }
    Tensor eta({n, r});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < r; ++j) eta.at(i, j) = cols[j][i];
    }
    Tensor eta_inv({r, n});
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < n; ++i) eta_inv.at(j, i) = eta.at(i, j);
    }
    m.params.add("eta.w", std::move(eta));
    add_zeros(m.params, "eta.b", {r});
    m.params.add("K", Tensor::identity(r));
    m.params.add("eta_inv.w", std::move(eta_inv));
    add_zeros(m.params, "eta_inv.b", {n});

    for (std::size_t i = 0; i < config.depth; ++i) {
        add_block_params(m.params, config, seed, "xi" + std::to_string(i));
    }
    return m;
}

Var TapeModel::at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw Error::parameter("unknown parameter '" + name + "'");
    return vars[it->second];
}

TapeModel bind(Tape& tape, const Model& model) {
    TapeModel tm;
    tm.tape = &tape;
    tm.config = &model.config;
    tm.vars.reserve(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        tm.vars.push_back(constant(tape, model.params.tensor(i)));
        tm.index.emplace(model.params.names()[i], i);
    }
    return tm;
}

TapeModel bind_with(Tape& tape, const Model& model, const std::vector<Var>& vars) {
    if (vars.size() != model.params.size()) {
        throw Error::parameter("bind_with needs " + std::to_string(model.params.size()) +
                               " vars, got " + std::to_string(vars.size()));
    }
    TapeModel tm;
    tm.tape = &tape;
    tm.config = &model.config;
    tm.vars = vars;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        tm.index.emplace(model.params.names()[i], i);
    }
    return tm;
}

namespace {

void require_batch(const Tensor& t, std::size_t width, const char* what) {
    if (t.rank() != 2 || t.extent(1) != width) {
        throw Error::dimension(std::string(what) + " expects [batch x " + std::to_string(width) +
                               "], got " + t.shape_string());
    }
}

struct Qkv {
    Var q, k, v, x;
};

// Tokenize a [batch x n] state: each spatial sample lifts to d_model through a
// learned scalar embedding plus a learned per-position embedding.
Var transres_tokens(const TapeModel& tm, const std::string& p, Var u) {
    const std::size_t bsz = u.value().extent(0), n = tm.config->n;
    Var flat = reshape(u, {bsz * n, 1});
    Var x = add_bias(matmul(flat, tm.at(p + ".emb.w")), tm.at(p + ".emb.b"));
    return add(x, tile_rows(tm.at(p + ".pos"), bsz));
}

Qkv transres_qkv(const TapeModel& tm, const std::string& p, Var u) {
    Var x = transres_tokens(tm, p, u);
    Qkv out;
    out.x = x;
    out.q = add_bias(matmul(x, tm.at(p + ".attn.wq")), tm.at(p + ".attn.bq"));
    out.k = add_bias(matmul(x, tm.at(p + ".attn.wk")), tm.at(p + ".attn.bk"));
    out.v = add_bias(matmul(x, tm.at(p + ".attn.wv")), tm.at(p + ".attn.bv"));
    return out;
}

Var transres_apply(const TapeModel& tm, const std::string& p, Var u) {
    const std::size_t bsz = u.value().extent(0), n = tm.config->n;
    Qkv qkv = transres_qkv(tm, p, u);
    Var attn = multihead_attention(qkv.q, qkv.k, qkv.v, tm.config->heads, bsz);
    Var proj = add_bias(matmul(attn, tm.at(p + ".attn.wo")), tm.at(p + ".attn.bo"));
    Var norm1 = layer_norm(add(qkv.x, proj), tm.at(p + ".ln1.g"), tm.at(p + ".ln1.b"));
    Var hidden = relu(add_bias(matmul(norm1, tm.at(p + ".ff.w1")), tm.at(p + ".ff.b1")));
    Var ff = add_bias(matmul(hidden, tm.at(p + ".ff.w2")), tm.at(p + ".ff.b2"));
    Var norm2 = layer_norm(add(norm1, ff), tm.at(p + ".ln2.g"), tm.at(p + ".ln2.b"));
    Var out = add_bias(matmul(norm2, tm.at(p + ".readout.w")), tm.at(p + ".readout.b"));
    return reshape(out, {bsz, n});
}

Var denseres_apply(const TapeModel& tm, const std::string& p, Var u) {
    Var h = u;
    for (int i = 1; i <= 4; ++i) {
        const std::string layer = p + ".dense" + std::to_string(i);
        h = add_bias(matmul(h, tm.at(layer + ".w")), tm.at(layer + ".b"));
        if (i < 4) h = relu(h);
    }
    return h;
}

Var convres_apply(const TapeModel& tm, const std::string& p, Var u) {
    const std::size_t bsz = u.value().extent(0), n = tm.config->n;
    // [batch x n] doubles as [batch samples x 1 channel x n].
    Var h = u;
    for (int i = 1; i <= 4; ++i) {
        const std::string layer = p + ".conv" + std::to_string(i);
        h = relu(conv1d_circular(h, tm.at(layer + ".w"), tm.at(layer + ".b"), bsz));
        if (i < 4) h = avg_pool2(h);
    }
    Var flat = reshape(h, {bsz, 64 * (n / 8)});
    return add_bias(matmul(flat, tm.at(p + ".out.w")), tm.at(p + ".out.b"));
}

Var block_apply(const TapeModel& tm, const std::string& p, Var u) {
    switch (tm.config->block) {
        case BlockKind::transres: return transres_apply(tm, p, u);
        case BlockKind::denseres: return denseres_apply(tm, p, u);
        case BlockKind::convres: return convres_apply(tm, p, u);
    }
    throw Error::parameter("unknown block kind");
}

Var block_chain(const TapeModel& tm, const char* base, Var u) {
    Var x = u;
    for (std::size_t i = 0; i < tm.config->depth; ++i) {
        x = block_apply(tm, std::string(base) + std::to_string(i), x);
    }
    return x;
}

}  // namespace

Var outer_encode(const TapeModel& tm, Var u) {
    require_batch(u.value(), tm.config->n, "outer_encode");
    return add(u, block_chain(tm, "phi", u));
}

Var inner_encode(const TapeModel& tm, Var g) {
    require_batch(g.value(), tm.config->n, "inner_encode");
    return add_bias(matmul(g, tm.at("eta.w")), tm.at("eta.b"));
}

Var inner_decode(const TapeModel& tm, Var y) {
    require_batch(y.value(), tm.config->r, "inner_decode");
    return add_bias(matmul(y, tm.at("eta_inv.w")), tm.at("eta_inv.b"));
}

Var encode(const TapeModel& tm, Var u) {
    return inner_encode(tm, outer_encode(tm, u));
}

Var advance(const TapeModel& tm, Var y, long long p) {
    if (p < 0) throw Error::parameter("advance requires p >= 0, got " + std::to_string(p));
    require_batch(y.value(), tm.config->r, "advance");
    Var out = y;
    for (long long i = 0; i < p; ++i) out = matmul(out, tm.at("K"));
    return out;
}

Var decode(const TapeModel& tm, Var y) {
    Var inner = inner_decode(tm, y);
    return add(inner, block_chain(tm, "xi", inner));
}

Var outer_decode(const TapeModel& tm, Var g) {
    require_batch(g.value(), tm.config->n, "outer_decode");
    return add(g, block_chain(tm, "xi", g));
}

namespace {

template <typename Fn>
Tensor run_eval(const Model& m, const Tensor& in, Fn&& fn) {
    Tape tape;
    TapeModel tm = bind(tape, m);
    const bool rank1 = in.rank() == 1;
    Tensor shaped = rank1 ? in.reshaped({1, in.numel()}) : in;
    Var out = fn(tm, constant(tape, std::move(shaped)));
    Tensor result = out.value();
    if (rank1) result = result.reshaped({result.numel()});
    return result;
}

}  // namespace

Tensor outer_encode(const Model& m, const Tensor& u) {
    return run_eval(m, u, [](const TapeModel& tm, Var v) { return outer_encode(tm, v); });
}

Tensor inner_encode(const Model& m, const Tensor& g) {
    return run_eval(m, g, [](const TapeModel& tm, Var v) { return inner_encode(tm, v); });
}

Tensor encode(const Model& m, const Tensor& u) {
    return run_eval(m, u, [](const TapeModel& tm, Var v) { return encode(tm, v); });
}

Tensor inner_decode(const Model& m, const Tensor& y) {
    return run_eval(m, y, [](const TapeModel& tm, Var v) { return inner_decode(tm, v); });
}

Tensor advance(const Model& m, const Tensor& y, long long p) {
    return run_eval(m, y, [p](const TapeModel& tm, Var v) { return advance(tm, v, p); });
}

Tensor decode(const Model& m, const Tensor& y) {
    return run_eval(m, y, [](const TapeModel& tm, Var v) { return decode(tm, v); });
}

Tensor outer_decode(const Model& m, const Tensor& g) {
    return run_eval(m, g, [](const TapeModel& tm, Var v) { return outer_decode(tm, v); });
}

Tensor predict_rollout(const Model& m, const Tensor& u0, std::size_t steps) {
    const std::size_t n = m.config.n, r = m.config.r;
    if (u0.rank() != 1 || u0.numel() != n) {
        throw Error::dimension("rollout initial state must have length " + std::to_string(n) +
                               ", got " + u0.shape_string());
    }
    Tape tape;
    TapeModel tm = bind(tape, m);
    Var y = encode(tm, constant(tape, u0.reshaped({1, n})));
    Tensor latents({steps + 1, r});
    std::memcpy(latents.data(), y.value().data(), r * sizeof(double));
    for (std::size_t k = 1; k <= steps; ++k) {
        y = advance(tm, y, 1);
        std::memcpy(latents.data() + k * r, y.value().data(), r * sizeof(double));
    }
    // Decoding all latent rows as one batch matches per-row decoding bitwise:
    // every kernel treats rows (or sample blocks) independently.
    Var dec = decode(tm, constant(tape, std::move(latents)));
    return dec.value();
}

Tensor attention_rows(const Model& m, const Tensor& u) {
    if (m.config.block != BlockKind::transres) {
        throw Error::config("attention weights exist only for transformer blocks");
    }
    Tape tape;
    TapeModel tm = bind(tape, m);
    Tensor shaped = u.rank() == 1 ? u.reshaped({1, u.numel()}) : u;
    require_batch(shaped, m.config.n, "attention_rows");
    const std::size_t bsz = shaped.extent(0);
    Qkv qkv = transres_qkv(tm, "phi0", constant(tape, std::move(shaped)));
    Tensor weights;
    kernels::attention(qkv.q.value(), qkv.k.value(), qkv.v.value(), m.config.heads, bsz, &weights);
    return weights;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& value, std::size_t offset, const char* what) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw Error::format("truncated checkpoint: failed reading " + std::string(what) +
                            " at byte offset " + std::to_string(offset));
    }
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error::io("cannot open '" + tmp + "' for writing");
        out.write("KAEC", 4);
        write_raw(out, kCheckpointVersion);
        write_raw(out, static_cast<std::uint8_t>(m.config.block));
        write_raw(out, static_cast<std::uint32_t>(m.config.n));
        write_raw(out, static_cast<std::uint32_t>(m.config.r));
        write_raw(out, static_cast<std::uint32_t>(m.config.d_model));
        write_raw(out, static_cast<std::uint32_t>(m.config.heads));
        write_raw(out, static_cast<std::uint32_t>(m.config.ff()));
        write_raw(out, static_cast<std::uint32_t>(m.config.depth));
        write_raw(out, static_cast<std::uint32_t>(m.params.size()));
        for (std::size_t i = 0; i < m.params.size(); ++i) {
            const std::string& name = m.params.names()[i];
            const Tensor& t = m.params.tensor(i);
            write_raw(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_raw(out, static_cast<std::uint32_t>(t.rank()));
            for (std::size_t axis = 0; axis < t.rank(); ++axis) {
                write_raw(out, static_cast<std::uint64_t>(t.extent(axis)));
            }
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
        out.flush();
        if (!out) throw Error::io("failed writing checkpoint to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error::io("cannot move '" + tmp + "' into place: " + ec.message());
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open '" + path + "'");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "KAEC", 4) != 0) {
        throw Error::format("bad checkpoint magic in '" + path + "'");
    }
    std::uint32_t version = 0;
    read_raw(in, version, 4, "version");
    if (version != kCheckpointVersion) {
        throw Error::format("unsupported checkpoint version " + std::to_string(version));
    }
    std::uint8_t kind_tag = 0;
    read_raw(in, kind_tag, 8, "block kind");
    if (kind_tag > 2) {
        throw Error::format("invalid block kind tag " + std::to_string(kind_tag));
    }
    ModelConfig cfg;
    cfg.block = static_cast<BlockKind>(kind_tag);
    std::uint32_t n = 0, r = 0, d_model = 0, heads = 0, ff_width = 0, depth = 0, count = 0;
    read_raw(in, n, 9, "state dimension");
    read_raw(in, r, 13, "latent rank");
    read_raw(in, d_model, 17, "d_model");
    read_raw(in, heads, 21, "head count");
    read_raw(in, ff_width, 25, "ff width");
    read_raw(in, depth, 29, "depth");
    read_raw(in, count, 33, "tensor count");
    cfg.n = n;
    cfg.r = r;
    cfg.d_model = d_model;
    cfg.heads = heads;
    cfg.ff_width = ff_width;
    cfg.depth = depth;
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw Error::format("checkpoint config invalid: " + std::string(e.what()));
    }

    Model m = init_model(cfg, 0);
    if (count != m.params.size()) {
        throw Error::format("checkpoint stores " + std::to_string(count) + " tensors, expected " +
                            std::to_string(m.params.size()));
    }
    std::size_t offset = 37;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        std::uint32_t name_len = 0;
        read_raw(in, name_len, offset, "tensor name length");
        offset += 4;
        if (name_len == 0 || name_len > 4096) {
            throw Error::format("implausible tensor name length " + std::to_string(name_len) +
                                " at byte offset " + std::to_string(offset - 4));
        }
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) {
            throw Error::format("truncated checkpoint: failed reading tensor name at byte offset " +
                                std::to_string(offset));
        }
        offset += name_len;
        Tensor& t = m.params.tensor(i);
        if (name != m.params.names()[i]) {
            throw Error::format("checkpoint tensor '" + name + "' does not match expected '" +
                                m.params.names()[i] + "'");
        }
        std::uint32_t rank = 0;
        read_raw(in, rank, offset, "tensor rank");
        offset += 4;
        if (rank != t.rank()) {
            throw Error::format("checkpoint tensor '" + name + "' has rank " +
                                std::to_string(rank) + ", expected " + std::to_string(t.rank()));
        }
        for (std::size_t axis = 0; axis < rank; ++axis) {
            std::uint64_t extent = 0;
            read_raw(in, extent, offset, "tensor extent");
            offset += 8;
            if (extent != t.extent(axis)) {
                throw Error::format("checkpoint tensor '" + name + "' extent mismatch on axis " +
                                    std::to_string(axis));
            }
        }
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) {
            throw Error::format("truncated checkpoint: failed reading tensor '" + name +
                                "' at byte offset " + std::to_string(offset));
        }
        offset += t.numel() * sizeof(double);
    }
    if (in.peek() != std::ifstream::traits_type::eof()) {
        throw Error::format("trailing bytes after checkpoint payload at byte offset " +
                            std::to_string(offset));
    }
    return m;
}

}  // namespace kae
