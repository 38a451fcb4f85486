#include "moce/roles.hpp"

#include <cmath>

#include "moce/kernels.hpp"
#include "moce/rng.hpp"

namespace moce {

std::optional<int> role_index(std::string_view name) {
    for (int k = 0; k < kRoleCount; ++k)
        if (kRoleNames[k] == name) return k;
    return std::nullopt;
}

std::string_view role_name(int index) {
    if (index < 0 || index >= kRoleCount)
        throw ValidationError("role_name: index out of range");
    return kRoleNames[index];
}

RoleClassifierParams init_role_classifier(std::uint64_t seed, int dim, int role_count) {
    RngStream rng = RngStream(seed).split("role_classifier");
    RoleClassifierParams p;
    p.weight = random_gaussian(dim, role_count, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    p.bias = DenseMatrix(1, role_count);
    return p;
}

RoleDistribution predict_roles(const TokenBatch& x, const RoleClassifierParams& params) {
    if (x.dim() != params.weight.rows)
        throw DimensionError("predict_roles: token dim does not match classifier");
    RoleDistribution dist;
    dist.batch = x.batch;
    dist.tokens = x.tokens;
    dist.probs = softmax_rows(add_row_broadcast(matmul(x.data, params.weight), params.bias));
    return dist;
}

double role_loss(const RoleDistribution& pred, std::span<const int> labels,
                 std::span<const std::uint8_t> mask) {
    const DenseMatrix& p = pred.probs;
    if (static_cast<int>(labels.size()) != p.rows || static_cast<int>(mask.size()) != p.rows)
        throw DimensionError("role_loss: labels/mask length must equal token count");
    int count = 0;
    double acc = 0.0;
    for (int i = 0; i < p.rows; ++i) {
        if (!mask[i]) continue;
        if (labels[i] < 0 || labels[i] >= p.cols)
            throw ValidationError("role_loss: label out of range at token " + std::to_string(i));
        ++count;
        acc -= std::log(std::max(p.at(i, labels[i]), kLogEps));
    }
    return count == 0 ? 0.0 : acc / count;
}

std::vector<int> role_argmax(const RoleDistribution& dist) {
    std::vector<int> out(dist.probs.rows);
    for (int i = 0; i < dist.probs.rows; ++i) out[i] = argmax_row(dist.probs.row(i));
    return out;
}

} // namespace moce
