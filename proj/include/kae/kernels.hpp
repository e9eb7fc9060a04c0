#pragma once

#include <cstddef>
#include <vector>

#include "kae/tensor.hpp"

// Forward (and the heavyweight backward) computations shared by the autodiff
// tape and the no-tape inference path. Using one implementation for both
// guarantees bit-identical results between recorded and plain evaluation.
// Shape validation is the caller's job.
namespace kae::kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

// Per-row normalization over the feature axis. When stats pointers are given,
// per-row mean and 1/sqrt(var+eps) are saved for the backward pass.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps,
                  std::vector<double>* mean_out = nullptr,
                  std::vector<double>* inv_std_out = nullptr);

// Fused multi-head scaled-dot-product attention over q/k/v packed as
// [samples*tokens x d_model]. The kernel streams softmax rows without
// materializing the [samples*heads x tokens*tokens] weight matrix; pass a
// non-null weights_out only when the weights themselves are wanted (for
// inspection or tests).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t samples, Tensor* weights_out = nullptr);

// Accumulates (+=) into dq/dk/dv, which must be zero-or-valid gradient
// buffers of the operand shapes. Softmax rows are recomputed from q/k rather
// than stored by the forward pass: one extra score pass costs less than
// writing and re-reading the O(heads · tokens²) weight matrix.
void attention_backward(const Tensor& grad, const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t heads, std::size_t samples,
                        Tensor& dq, Tensor& dk, Tensor& dv);

// x packs `samples` channel blocks row-wise: [samples*C_in x L]; weights are
// shared across samples and the output is [samples*C_out x L].
Tensor conv1d_circular(const Tensor& x, const Tensor& w, const Tensor& b,
                       std::size_t samples = 1);
Tensor avg_pool2(const Tensor& x);
Tensor tile_rows(const Tensor& a, std::size_t copies);
Tensor transpose(const Tensor& a);

}  // namespace kae::kernels
