#include "moce/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace moce {

namespace {

void softmax_into(std::span<const double> logits, std::span<double> out) {
    if (logits.empty()) throw DimensionError("softmax: empty input");
    double max_logit = logits[0];
    for (double v : logits) {
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
        max_logit = std::max(max_logit, v);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - max_logit);
        sum += out[k];
    }
    for (std::size_t k = 0; k < logits.size(); ++k) out[k] /= sum;
}

} // namespace

ProbVector softmax(std::span<const double> logits) {
    ProbVector p;
    p.p.resize(logits.size());
    softmax_into(logits, p.p);
    return p;
}

double entropy_nats(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= v * std::log(std::max(v, kLogEps));
    return h;
}

double entropy_nats(const ProbVector& p) {
    p.validate();
    return entropy_nats(std::span<const double>(p.p));
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
    DenseMatrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) softmax_into(logits.row(i), out.row(i));
    return out;
}

DenseMatrix entropy_rows(const DenseMatrix& probs) {
    DenseMatrix out(probs.rows, 1);
    for (int i = 0; i < probs.rows; ++i) out.at(i, 0) = entropy_nats(probs.row(i));
    return out;
}

DenseMatrix confidence_from_entropy(const DenseMatrix& entropy, int role_count) {
    if (role_count < 2)
        throw ConfigError("confidence: role count must be >= 2 (ln R would be 0)");
    if (entropy.cols != 1) throw DimensionError("confidence: entropy must be M x 1");
    const double log_r = std::log(static_cast<double>(role_count));
    DenseMatrix out(entropy.rows, 1);
    for (int i = 0; i < entropy.rows; ++i)
        out.at(i, 0) = std::clamp(1.0 - entropy.at(i, 0) / log_r, 0.0, 1.0);
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions disagree");
    DenseMatrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    }
    return out;
}

DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.cols) throw DimensionError("matmul_transpose_b: shapes disagree");
    DenseMatrix out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(j, k);
            out.at(i, j) = acc;
        }
    return out;
}

DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows) throw DimensionError("matmul_transpose_a: shapes disagree");
    DenseMatrix out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k)
        for (int i = 0; i < a.cols; ++i) {
            const double aki = a.at(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aki * b.at(k, j);
        }
    return out;
}

DenseMatrix add_row_broadcast(const DenseMatrix& a, const DenseMatrix& bias) {
    if (bias.rows != 1 || bias.cols != a.cols)
        throw DimensionError("add_row_broadcast: bias must be 1 x cols");
    DenseMatrix out = a;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(i, j) += bias.at(0, j);
    return out;
}

DenseMatrix relu(const DenseMatrix& a) {
    DenseMatrix out = a;
    for (double& v : out.data) v = std::max(0.0, v);
    return out;
}

DenseMatrix row_scale(const DenseMatrix& a, const DenseMatrix& scale, double gain) {
    if (scale.cols != 1 || scale.rows != a.rows)
        throw DimensionError("row_scale: scale must be rows x 1");
    DenseMatrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double s = gain * scale.at(i, 0);
        for (int j = 0; j < a.cols; ++j) out.at(i, j) = s * a.at(i, j);
    }
    return out;
}

DenseMatrix fuse_weighted(const std::vector<DenseMatrix>& outputs, const DenseMatrix& weights) {
    if (static_cast<int>(outputs.size()) != weights.cols)
        throw DimensionError("fuse_weighted: expert count does not match weight columns");
    if (outputs.empty()) throw DimensionError("fuse_weighted: no expert outputs");
    const DenseMatrix& first = outputs.front();
    if (first.rows != weights.rows)
        throw DimensionError("fuse_weighted: token count mismatch");
    DenseMatrix out(first.rows, first.cols);
    for (std::size_t e = 0; e < outputs.size(); ++e) {
        const DenseMatrix& y = outputs[e];
        if (!y.same_shape(first)) throw DimensionError("fuse_weighted: expert output shape mismatch");
        for (int i = 0; i < out.rows; ++i) {
            const double w = weights.at(i, static_cast<int>(e));
            for (int j = 0; j < out.cols; ++j) out.at(i, j) += w * y.at(i, j);
        }
    }
    return out;
}

double mean_squared_error(const DenseMatrix& pred, const DenseMatrix& target) {
    if (!pred.same_shape(target)) throw DimensionError("mean_squared_error: shape mismatch");
    if (pred.numel() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

int argmax_row(std::span<const double> row) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(row.size()); ++k)
        if (row[k] > row[best]) best = k;
    return best;
}

} // namespace moce
