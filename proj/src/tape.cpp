#include "moce/tape.hpp"

#include <algorithm>
#include <cmath>

namespace moce {

int GradTape::push(Node n) {
    n.value = compute(n);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

DenseMatrix GradTape::compute(const Node& n) const {
    switch (n.kind) {
        case OpKind::kLeaf:
            return n.value;
        case OpKind::kMatMul:
            return moce::matmul(value(n.inputs[0]), value(n.inputs[1]));
        case OpKind::kAddRow:
            return add_row_broadcast(value(n.inputs[0]), value(n.inputs[1]));
        case OpKind::kSoftmaxRows:
            return moce::softmax_rows(value(n.inputs[0]));
        case OpKind::kEntropyRows:
            return moce::entropy_rows(value(n.inputs[0]));
        case OpKind::kConfidence:
            return confidence_from_entropy(value(n.inputs[0]), n.role_count);
        case OpKind::kRowScale:
            return moce::row_scale(value(n.inputs[0]), value(n.inputs[1]), n.scalar);
        case OpKind::kRelu:
            return moce::relu(value(n.inputs[0]));
        case OpKind::kFuse: {
            std::vector<DenseMatrix> outputs;
            outputs.reserve(n.inputs.size() - 1);
            for (std::size_t e = 1; e < n.inputs.size(); ++e) outputs.push_back(value(n.inputs[e]));
            return fuse_weighted(outputs, value(n.inputs[0]));
        }
        case OpKind::kMseLoss: {
            DenseMatrix out(1, 1);
            out.at(0, 0) = mean_squared_error(value(n.inputs[0]), n.constant);
            return out;
        }
        case OpKind::kMaskedNll: {
            const DenseMatrix& p = value(n.inputs[0]);
            int count = 0;
            double acc = 0.0;
            for (int i = 0; i < p.rows; ++i) {
                if (!n.mask[i]) continue;
                ++count;
                acc -= std::log(std::max(p.at(i, n.indices[i]), kLogEps));
            }
            DenseMatrix out(1, 1);
            out.at(0, 0) = count == 0 ? 0.0 : acc / count;
            return out;
        }
        case OpKind::kStructPenalty: {
            const DenseMatrix& w = value(n.inputs[0]);
            const DenseMatrix& alpha = value(n.inputs[1]);
            double acc = 0.0;
            for (int i = 0; i < w.rows; ++i) {
                double mass = 0.0;
                for (int e = 0; e < w.cols; ++e) mass += w.at(i, e) * n.constant.at(n.indices[i], e);
                acc += alpha.at(i, 0) * mass;
            }
            DenseMatrix out(1, 1);
            out.at(0, 0) = w.rows == 0 ? 0.0 : acc / w.rows;
            return out;
        }
        case OpKind::kCombine: {
            double acc = 0.0;
            for (std::size_t j = 0; j < n.inputs.size(); ++j)
                acc += n.coeffs[j] * value(n.inputs[j]).at(0, 0);
            DenseMatrix out(1, 1);
            out.at(0, 0) = acc;
            return out;
        }
    }
    throw Error("GradTape: unknown op");
}

int GradTape::leaf(DenseMatrix v) {
    Node n;
    n.kind = OpKind::kLeaf;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int GradTape::matmul(int a, int b) {
    Node n;
    n.kind = OpKind::kMatMul;
    n.inputs = {a, b};
    return push(std::move(n));
}

int GradTape::add_row(int a, int bias) {
    Node n;
    n.kind = OpKind::kAddRow;
    n.inputs = {a, bias};
    return push(std::move(n));
}

int GradTape::softmax_rows(int a) {
    Node n;
    n.kind = OpKind::kSoftmaxRows;
    n.inputs = {a};
    return push(std::move(n));
}

int GradTape::entropy_rows(int probs) {
    Node n;
    n.kind = OpKind::kEntropyRows;
    n.inputs = {probs};
    return push(std::move(n));
}

int GradTape::confidence(int entropy, int role_count) {
    Node n;
    n.kind = OpKind::kConfidence;
    n.inputs = {entropy};
    n.role_count = role_count;
    return push(std::move(n));
}

int GradTape::row_scale(int a, int scale_column, double gain) {
    Node n;
    n.kind = OpKind::kRowScale;
    n.inputs = {a, scale_column};
    n.scalar = gain;
    return push(std::move(n));
}

int GradTape::relu(int a) {
    Node n;
    n.kind = OpKind::kRelu;
    n.inputs = {a};
    return push(std::move(n));
}

int GradTape::fuse(int weights, const std::vector<int>& expert_outputs) {
    Node n;
    n.kind = OpKind::kFuse;
    n.inputs.push_back(weights);
    n.inputs.insert(n.inputs.end(), expert_outputs.begin(), expert_outputs.end());
    return push(std::move(n));
}

int GradTape::mse_loss(int pred, DenseMatrix target) {
    Node n;
    n.kind = OpKind::kMseLoss;
    n.inputs = {pred};
    n.constant = std::move(target);
    return push(std::move(n));
}

int GradTape::masked_nll(int probs, std::vector<int> labels, std::vector<std::uint8_t> mask) {
    const DenseMatrix& p = value(probs);
    if (static_cast<int>(labels.size()) != p.rows || static_cast<int>(mask.size()) != p.rows)
        throw DimensionError("masked_nll: labels/mask length must equal row count");
    for (int i = 0; i < p.rows; ++i)
        if (mask[i] && (labels[i] < 0 || labels[i] >= p.cols))
            throw ValidationError("masked_nll: label out of range at token " + std::to_string(i));
    Node n;
    n.kind = OpKind::kMaskedNll;
    n.inputs = {probs};
    n.indices = std::move(labels);
    n.mask = std::move(mask);
    return push(std::move(n));
}

int GradTape::struct_penalty(int weights, int alpha, std::vector<int> role_index, DenseMatrix incompat) {
    const DenseMatrix& w = value(weights);
    if (static_cast<int>(role_index.size()) != w.rows)
        throw DimensionError("struct_penalty: role index length must equal row count");
    if (incompat.cols != w.cols)
        throw DimensionError("struct_penalty: incompat columns must equal expert count");
    for (int r : role_index)
        if (r < 0 || r >= incompat.rows)
            throw ValidationError("struct_penalty: role index out of range");
    Node n;
    n.kind = OpKind::kStructPenalty;
    n.inputs = {weights, alpha};
    n.indices = std::move(role_index);
    n.constant = std::move(incompat);
    return push(std::move(n));
}

int GradTape::combine(const std::vector<int>& scalars, std::vector<double> coeffs) {
    if (scalars.size() != coeffs.size())
        throw DimensionError("combine: ids and coefficients disagree");
    Node n;
    n.kind = OpKind::kCombine;
    n.inputs = scalars;
    n.coeffs = std::move(coeffs);
    return push(std::move(n));
}

void GradTape::backward(int loss_id) {
    for (Node& n : nodes_) {
        n.grad = DenseMatrix(n.value.rows, n.value.cols);
    }
    Node& loss = nodes_[loss_id];
    if (loss.value.rows != 1 || loss.value.cols != 1)
        throw DimensionError("backward: loss must be scalar");
    loss.grad.at(0, 0) = 1.0;
    for (int id = loss_id; id >= 0; --id) backward_node(id);
}

void GradTape::backward_node(int id) {
    Node& n = nodes_[id];
    const DenseMatrix& g = n.grad;
    switch (n.kind) {
        case OpKind::kLeaf:
            return;
        case OpKind::kMatMul: {
            const DenseMatrix& a = value(n.inputs[0]);
            const DenseMatrix& b = value(n.inputs[1]);
            DenseMatrix ga = matmul_transpose_b(g, b);
            DenseMatrix gb = matmul_transpose_a(a, g);
            DenseMatrix& accum_a = nodes_[n.inputs[0]].grad;
            DenseMatrix& accum_b = nodes_[n.inputs[1]].grad;
            for (std::size_t i = 0; i < ga.data.size(); ++i) accum_a.data[i] += ga.data[i];
            for (std::size_t i = 0; i < gb.data.size(); ++i) accum_b.data[i] += gb.data[i];
            return;
        }
        case OpKind::kAddRow: {
            DenseMatrix& ga = nodes_[n.inputs[0]].grad;
            DenseMatrix& gbias = nodes_[n.inputs[1]].grad;
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gbias.at(0, j) += g.at(i, j);
            return;
        }
        case OpKind::kSoftmaxRows: {
            // d/dlogit = p * (g - <g, p>)
            const DenseMatrix& p = n.value;
            DenseMatrix& ga = nodes_[n.inputs[0]].grad;
            for (int i = 0; i < p.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < p.cols; ++j) dot += g.at(i, j) * p.at(i, j);
                for (int j = 0; j < p.cols; ++j)
                    ga.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
            }
            return;
        }
        case OpKind::kEntropyRows: {
            // H = -sum p ln(max(p, eps)); below the clamp the derivative is -ln(eps).
            const DenseMatrix& p = value(n.inputs[0]);
            DenseMatrix& gp = nodes_[n.inputs[0]].grad;
            for (int i = 0; i < p.rows; ++i) {
                const double gi = g.at(i, 0);
                for (int j = 0; j < p.cols; ++j) {
                    const double v = p.at(i, j);
                    const double d = v > kLogEps ? -(std::log(v) + 1.0) : -std::log(kLogEps);
                    gp.at(i, j) += gi * d;
                }
            }
            return;
        }
        case OpKind::kConfidence: {
            // Zero gradient where the [0,1] clamp is active.
            const double log_r = std::log(static_cast<double>(n.role_count));
            DenseMatrix& gh = nodes_[n.inputs[0]].grad;
            for (int i = 0; i < n.value.rows; ++i) {
                const double a = n.value.at(i, 0);
                if (a > 0.0 && a < 1.0) gh.at(i, 0) += g.at(i, 0) * (-1.0 / log_r);
            }
            return;
        }
        case OpKind::kRowScale: {
            const DenseMatrix& a = value(n.inputs[0]);
            const DenseMatrix& s = value(n.inputs[1]);
            DenseMatrix& ga = nodes_[n.inputs[0]].grad;
            DenseMatrix& gs = nodes_[n.inputs[1]].grad;
            for (int i = 0; i < a.rows; ++i) {
                double acc = 0.0;
                const double si = n.scalar * s.at(i, 0);
                for (int j = 0; j < a.cols; ++j) {
                    ga.at(i, j) += g.at(i, j) * si;
                    acc += g.at(i, j) * a.at(i, j);
                }
                gs.at(i, 0) += n.scalar * acc;
            }
            return;
        }
        case OpKind::kRelu: {
            const DenseMatrix& a = value(n.inputs[0]);
            DenseMatrix& ga = nodes_[n.inputs[0]].grad;
            for (std::size_t i = 0; i < a.data.size(); ++i)
                if (a.data[i] > 0.0) ga.data[i] += g.data[i];
            return;
        }
        case OpKind::kFuse: {
            const DenseMatrix& w = value(n.inputs[0]);
            DenseMatrix& gw = nodes_[n.inputs[0]].grad;
            for (std::size_t e = 1; e < n.inputs.size(); ++e) {
                const DenseMatrix& y = value(n.inputs[e]);
                DenseMatrix& gy = nodes_[n.inputs[e]].grad;
                const int col = static_cast<int>(e) - 1;
                for (int i = 0; i < y.rows; ++i) {
                    const double wi = w.at(i, col);
                    double acc = 0.0;
                    for (int j = 0; j < y.cols; ++j) {
                        gy.at(i, j) += g.at(i, j) * wi;
                        acc += g.at(i, j) * y.at(i, j);
                    }
                    gw.at(i, col) += acc;
                }
            }
            return;
        }
        case OpKind::kMseLoss: {
            const DenseMatrix& p = value(n.inputs[0]);
            DenseMatrix& gp = nodes_[n.inputs[0]].grad;
            if (p.numel() == 0) return;
            const double scale = g.at(0, 0) * 2.0 / static_cast<double>(p.numel());
            for (std::size_t i = 0; i < p.data.size(); ++i)
                gp.data[i] += scale * (p.data[i] - n.constant.data[i]);
            return;
        }
        case OpKind::kMaskedNll: {
            const DenseMatrix& p = value(n.inputs[0]);
            DenseMatrix& gp = nodes_[n.inputs[0]].grad;
            int count = 0;
            for (int i = 0; i < p.rows; ++i) count += n.mask[i] ? 1 : 0;
            if (count == 0) return;
            const double scale = g.at(0, 0) / count;
            for (int i = 0; i < p.rows; ++i) {
                if (!n.mask[i]) continue;
                const double v = p.at(i, n.indices[i]);
                if (v > kLogEps) gp.at(i, n.indices[i]) += scale * (-1.0 / v);
            }
            return;
        }
        case OpKind::kStructPenalty: {
            const DenseMatrix& w = value(n.inputs[0]);
            const DenseMatrix& alpha = value(n.inputs[1]);
            DenseMatrix& gw = nodes_[n.inputs[0]].grad;
            DenseMatrix& galpha = nodes_[n.inputs[1]].grad;
            if (w.rows == 0) return;
            const double scale = g.at(0, 0) / w.rows;
            for (int i = 0; i < w.rows; ++i) {
                double mass = 0.0;
                for (int e = 0; e < w.cols; ++e) {
                    const double q = n.constant.at(n.indices[i], e);
                    gw.at(i, e) += scale * alpha.at(i, 0) * q;
                    mass += w.at(i, e) * q;
                }
                galpha.at(i, 0) += scale * mass;
            }
            return;
        }
        case OpKind::kCombine: {
            for (std::size_t j = 0; j < n.inputs.size(); ++j)
                nodes_[n.inputs[j]].grad.at(0, 0) += g.at(0, 0) * n.coeffs[j];
            return;
        }
    }
}

bool GradTape::replay_matches() const {
    for (const Node& n : nodes_) {
        if (n.kind == OpKind::kLeaf) continue;
        if (!bitwise_equal(compute(n), n.value)) return false;
    }
    return true;
}

} // namespace moce
