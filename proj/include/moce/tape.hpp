#pragma once

#include <cstdint>
#include <vector>

#include "moce/kernels.hpp"
#include "moce/matrix.hpp"

namespace moce {

enum class OpKind {
    kLeaf,
    kMatMul,
    kAddRow,
    kSoftmaxRows,
    kEntropyRows,
    kConfidence,
    kRowScale,
    kRelu,
    kFuse,
    kMseLoss,
    kMaskedNll,
    kStructPenalty,
    kCombine,
};

// Reverse-mode tape over matrix-valued primitives. Each node caches its
// forward value; backward() walks the record once in reverse. Tapes are
// single-owner and rebuilt per step.
class GradTape {
public:
    int leaf(DenseMatrix value);
    int matmul(int a, int b);
    int add_row(int a, int bias);
    int softmax_rows(int a);
    int entropy_rows(int probs);
    int confidence(int entropy, int role_count);
    int row_scale(int a, int scale_column, double gain);
    int relu(int a);
    /// fused = sum_e weights[:,e] * expert_outputs[e]
    int fuse(int weights, const std::vector<int>& expert_outputs);
    /// Mean squared error against a constant target.
    int mse_loss(int pred, DenseMatrix target);
    /// Mean over masked tokens of -ln(max(p[label], eps)); 0 when mask empty.
    int masked_nll(int probs, std::vector<int> labels, std::vector<std::uint8_t> mask);
    /// Mean over tokens of alpha_i * sum_e w[i][e] * incompat[role[i]][e].
    /// role indices are constants (stop-gradient through the argmax).
    int struct_penalty(int weights, int alpha, std::vector<int> role_index, DenseMatrix incompat);
    /// Linear combination of scalar nodes: sum_j coeff[j] * value(ids[j]).
    int combine(const std::vector<int>& scalars, std::vector<double> coeffs);

    const DenseMatrix& value(int id) const { return nodes_[id].value; }
    double scalar_value(int id) const { return nodes_[id].value.at(0, 0); }

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
    void backward(int loss_id);
    const DenseMatrix& grad(int id) const { return nodes_[id].grad; }

    /// Recomputes every non-leaf value from its recorded inputs and compares
    /// bit-exactly against the cached forward values.
    bool replay_matches() const;

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        DenseMatrix value;
        DenseMatrix grad;
        double scalar = 0.0;                 // kRowScale gain
        int role_count = 0;                  // kConfidence
        std::vector<int> indices;            // kMaskedNll labels / kStructPenalty roles
        std::vector<std::uint8_t> mask;      // kMaskedNll
        DenseMatrix constant;                // kMseLoss target / kStructPenalty incompat
        std::vector<double> coeffs;          // kCombine
    };

    DenseMatrix compute(const Node& n) const;
    int push(Node n);
    void backward_node(int id);

    std::vector<Node> nodes_;
};

} // namespace moce
