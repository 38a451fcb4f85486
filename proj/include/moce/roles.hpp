#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "moce/batch.hpp"
#include "moce/matrix.hpp"

namespace moce {

// Fixed 9-role taxonomy for table tokens. Order is versioned: index k is
// stable across runs, but corpora always serialize roles by name.
inline constexpr int kRoleCount = 9;
inline constexpr int kTaxonomyVersion = 1;
inline constexpr std::array<std::string_view, kRoleCount> kRoleNames = {
    "HEADER", "DATA", "AXIS", "UNIT", "TOTAL", "FORMULA", "ANNOTATION", "TEXT", "EMPTY",
};

enum Role : int {
    kHeader = 0,
    kData,
    kAxis,
    kUnit,
    kTotal,
    kFormula,
    kAnnotation,
    kText,
    kEmpty,
};

std::optional<int> role_index(std::string_view name);
std::string_view role_name(int index);

// Affine role classifier: logits = x * weight + bias.
struct RoleClassifierParams {
    DenseMatrix weight; // D x R
    DenseMatrix bias;   // 1 x R
};

RoleClassifierParams init_role_classifier(std::uint64_t seed, int dim, int role_count = kRoleCount);

/// r~ = softmax(x * W + b), one row per token.
RoleDistribution predict_roles(const TokenBatch& x, const RoleClassifierParams& params);

/// Masked cross-entropy over tokens with ground-truth roles; 0 when the mask
/// is empty. labels[i] is ignored where mask[i] is false.
double role_loss(const RoleDistribution& pred, std::span<const int> labels,
                 std::span<const std::uint8_t> mask);

/// Per-token argmax role index; ties break to the lowest taxonomy index.
std::vector<int> role_argmax(const RoleDistribution& dist);

} // namespace moce
