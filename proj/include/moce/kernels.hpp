#pragma once

#include <span>
#include <vector>

#include "moce/matrix.hpp"

namespace moce {

// Clamp applied inside every log() so zero probabilities stay finite.
inline constexpr double kLogEps = 1e-12;

/// Numerically stable softmax (max-subtracted). Shift-invariant.
ProbVector softmax(std::span<const double> logits);

/// Shannon entropy in nats: H = -sum p_k ln(max(p_k, kLogEps)).
double entropy_nats(const ProbVector& p);
double entropy_nats(std::span<const double> p);

/// Row-wise variants over matrices.
DenseMatrix softmax_rows(const DenseMatrix& logits);
DenseMatrix entropy_rows(const DenseMatrix& probs); // M x 1

/// alpha = clamp(1 - H / ln(role_count), 0, 1). role_count < 2 is a ConfigError.
DenseMatrix confidence_from_entropy(const DenseMatrix& entropy, int role_count);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b); // a * b^T
DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b); // a^T * b

/// value + bias broadcast over rows; bias is 1 x K.
DenseMatrix add_row_broadcast(const DenseMatrix& a, const DenseMatrix& bias);

DenseMatrix relu(const DenseMatrix& a);

/// z[i][j] = gain * scale[i][0] * a[i][j]; scale is M x 1.
DenseMatrix row_scale(const DenseMatrix& a, const DenseMatrix& scale, double gain);

/// sum_e weights[:,e] (broadcast over columns) * outputs[e].
DenseMatrix fuse_weighted(const std::vector<DenseMatrix>& outputs, const DenseMatrix& weights);

/// Mean of squared differences over all entries.
double mean_squared_error(const DenseMatrix& pred, const DenseMatrix& target);

int argmax_row(std::span<const double> row); // ties -> lowest index

} // namespace moce
