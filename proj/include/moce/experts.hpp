#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "moce/matrix.hpp"

namespace moce {

// Connector expert registry. Order is fixed and matches the compatibility
// matrix columns: HTML, JSON, Code, General.
inline constexpr int kExpertCount = 4;
inline constexpr std::array<std::string_view, kExpertCount> kExpertNames = {
    "HTML", "JSON", "Code", "General",
};

enum Expert : int {
    kHtml = 0,
    kJson,
    kCode,
    kGeneral,
};

int expert_index(std::string_view name); // throws ValidationError on unknown name

// Two-layer MLP: y = relu(x * w1 + b1) * w2 + b2, applied per token.
struct ExpertParams {
    std::string name;
    DenseMatrix w1; // D x H
    DenseMatrix b1; // 1 x H
    DenseMatrix w2; // H x D
    DenseMatrix b2; // 1 x D
};

struct ExpertRegistry {
    std::array<ExpertParams, kExpertCount> experts;
    int dim = 0;
    int hidden = 0;
};

DenseMatrix expert_forward(const DenseMatrix& x, const ExpertParams& params);

/// Warm-start initialization: one base draw (Gaussian, sigma = 1/sqrt(D)) is
/// copied into all four experts; HTML/JSON/Code then receive independent
/// perturbation noise while General keeps the unperturbed base copy.
ExpertRegistry init_warm_start(std::uint64_t seed, int dim, int hidden,
                               double sigma_pert = 0.05);

} // namespace moce
