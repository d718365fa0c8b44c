#pragma once

#include <memory>
#include <vector>

#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

using IndexMap = std::vector<std::size_t>;

// Batched matrix product. a is [..., m, k] and b is [..., k, n]; leading
// dims must match, or either side may be 2-d and is then shared across the
// other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Pure re-indexing: out[j] = x[map[j]], gradient scatter-adds back.
// All layout ops (transpose, window partition, shifts, patch merging) are
// built on this.
Tensor gather(const Tensor& x, std::shared_ptr<const IndexMap> map, Shape out_shape);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose_last2(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// x + bias with bias broadcast over leading dims (bias.size() divides x.size()).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// x + c with c broadcast cyclically; c takes no gradient (attention masks).
Tensor add_mask(const Tensor& x, const Tensor& c);

Tensor scale(const Tensor& x, double a);
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax_last(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Mean negative log-likelihood over rows whose target != ignore_index.
// logits [N, V]; all positions ignored yields 0 with zero gradient.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Row lookup: out [ids.size(), D] from table [V, D].
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

}  // namespace capgen
