#pragma once

#include "moce/matrix.hpp"

namespace moce {

// A batch of token embeddings, shape B x N x D, stored flattened as a
// (B*N) x D matrix in batch-major token order.
struct TokenBatch {
    int batch = 0;
    int tokens = 0;
    DenseMatrix data;

    TokenBatch() = default;
    TokenBatch(int b, int n, DenseMatrix d) : batch(b), tokens(n), data(std::move(d)) {
        if (data.rows != b * n) throw DimensionError("TokenBatch: rows != batch * tokens");
    }

    int dim() const { return data.cols; }
    int count() const { return batch * tokens; }
};

// Per-token probability rows over the role taxonomy, shape (B*N) x R.
struct RoleDistribution {
    int batch = 0;
    int tokens = 0;
    DenseMatrix probs;

    int role_count() const { return probs.cols; }
    int count() const { return batch * tokens; }
};

// Fused expert output; same shape as the input token batch.
struct FusedBatch {
    int batch = 0;
    int tokens = 0;
    DenseMatrix data;
};

} // namespace moce
