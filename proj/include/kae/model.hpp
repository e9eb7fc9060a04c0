#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kae/tape.hpp"
#include "kae/tensor.hpp"

namespace kae {

// Outer encoder/decoder block families. The same family is used for both the
// encoder block and the decoder block of one model.
enum class BlockKind : std::uint8_t {
    transres = 0,
    denseres = 1,
    convres = 2,
};

const char* block_name(BlockKind kind);
BlockKind block_from_name(const std::string& name);

struct ModelConfig {
    std::size_t n = 128;      // state dimension
    std::size_t r = 21;       // latent rank, r < n
    BlockKind block = BlockKind::transres;
    std::size_t d_model = 64;  // per-token embedding width (transformer block)
    std::size_t heads = 32;    // attention head count
    std::size_t ff_width = 0;  // feedforward hidden width; 0 means 4*d_model
    std::size_t depth = 1;     // outer blocks chained per encoder/decoder

    std::size_t ff() const { return ff_width != 0 ? ff_width : 4 * d_model; }
    void validate() const;  // throws a configuration error when inconsistent
};

// Named parameter tensors in a fixed insertion order. The order defines the
// serialization layout and the optimizer's state indexing.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor value);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::string>& names() const { return names_; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
    std::size_t size() const { return tensors_.size(); }
    std::size_t scalar_count() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// The autoencoder: latent y = eta((phi+I)u), dynamics y_{k+1} = y_k K,
// reconstruction u = (xi+I)(eta_inv y). Blocks phi/xi output a correction that
// rides on an identity shortcut; their final projections start at zero so a
// fresh model is exactly the identity composed with the eta/eta_inv pair.
struct Model {
    ModelConfig config;
    ParamStore params;
};

// Deterministic initialization: every tensor draws from a stream salted by its
// name, so adding or reordering parameters never shifts another tensor's
// values. eta gets orthonormal columns, eta_inv its transpose, K the identity.
Model init_model(const ModelConfig& config, std::uint64_t seed);

// Model parameters lifted onto a tape (one leaf per tensor, store order).
// Forward passes below take batched row-major inputs: u is [batch x n],
// latent y is [batch x r].
struct TapeModel {
    Tape* tape = nullptr;
    const ModelConfig* config = nullptr;
    std::vector<Var> vars;  // parallel to ParamStore order
    std::unordered_map<std::string, std::size_t> index;

    Var at(const std::string& name) const;
};

TapeModel bind(Tape& tape, const Model& model);
// Same structure, but over externally supplied leaves (finite-difference
// checks perturb parameters through here).
TapeModel bind_with(Tape& tape, const Model& model, const std::vector<Var>& vars);

Var outer_encode(const TapeModel& tm, Var u);        // (phi+I) u
Var inner_encode(const TapeModel& tm, Var g);        // eta g (+ bias)
Var encode(const TapeModel& tm, Var u);              // eta((phi+I)u)
Var advance(const TapeModel& tm, Var y, long long p);  // y K^p
Var inner_decode(const TapeModel& tm, Var y);        // eta_inv y (+ bias)
Var decode(const TapeModel& tm, Var y);              // (xi+I)(eta_inv y)
Var outer_decode(const TapeModel& tm, Var g);        // (xi+I) g

// Plain (no-gradient) evaluation. Runs the identical recorded pipeline on a
// scratch tape, so results are bit-identical with training-mode forwards.
// Rank-1 inputs are treated as a batch of one and returned rank-1.
Tensor outer_encode(const Model& m, const Tensor& u);
Tensor inner_encode(const Model& m, const Tensor& g);
Tensor encode(const Model& m, const Tensor& u);
Tensor advance(const Model& m, const Tensor& y, long long p);
Tensor inner_decode(const Model& m, const Tensor& y);
Tensor decode(const Model& m, const Tensor& y);
Tensor outer_decode(const Model& m, const Tensor& g);

// Rollout from one initial state: row k = decode(K^k encode(u0)), so row 0 is
// the plain reconstruction. Shape [steps+1 x n].
Tensor predict_rollout(const Model& m, const Tensor& u0, std::size_t steps);

// Softmax attention weights of the first encoder block on input u, packed
// [batch*heads x tokens*tokens] — inspection hook; transformer blocks only.
Tensor attention_rows(const Model& m, const Tensor& u);

// Binary checkpoint ("KAEC", versioned, little-endian): config header plus
// every parameter tensor with its name and shape. Bit-exact round trip.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace kae
