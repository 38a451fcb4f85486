#include "moce/experts.hpp"

#include <cmath>

#include "moce/kernels.hpp"
#include "moce/rng.hpp"

namespace moce {

int expert_index(std::string_view name) {
    for (int e = 0; e < kExpertCount; ++e)
        if (kExpertNames[e] == name) return e;
    throw ValidationError("unknown expert name: " + std::string(name));
}

DenseMatrix expert_forward(const DenseMatrix& x, const ExpertParams& params) {
    if (x.cols != params.w1.rows)
        throw DimensionError("expert_forward: input dim does not match w1");
    const DenseMatrix hidden = relu(add_row_broadcast(matmul(x, params.w1), params.b1));
    return add_row_broadcast(matmul(hidden, params.w2), params.b2);
}

namespace {

ExpertParams draw_params(int dim, int hidden, double sigma, RngStream& rng) {
    ExpertParams p;
    p.w1 = random_gaussian(dim, hidden, sigma, rng);
    p.b1 = random_gaussian(1, hidden, sigma, rng);
    p.w2 = random_gaussian(hidden, dim, sigma, rng);
    p.b2 = random_gaussian(1, dim, sigma, rng);
    return p;
}

void perturb(DenseMatrix& m, double sigma, RngStream& rng) {
    for (double& v : m.data) v += sigma * rng.next_gaussian();
}

} // namespace

ExpertRegistry init_warm_start(std::uint64_t seed, int dim, int hidden, double sigma_pert) {
    if (dim < 1 || hidden < 1)
        throw ValidationError("init_warm_start: dim and hidden must be >= 1");
    RngStream root = RngStream(seed).split("warm_start");
    RngStream base_stream = root.split("base");
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    const ExpertParams base = draw_params(dim, hidden, sigma, base_stream);

    ExpertRegistry reg;
    reg.dim = dim;
    reg.hidden = hidden;
    for (int e = 0; e < kExpertCount; ++e) {
        reg.experts[e] = base;
        reg.experts[e].name = std::string(kExpertNames[e]);
        if (e == kGeneral || sigma_pert == 0.0) continue; // General keeps the warm-start copy
        RngStream pert = root.split(static_cast<std::uint64_t>(e));
        perturb(reg.experts[e].w1, sigma_pert, pert);
        perturb(reg.experts[e].b1, sigma_pert, pert);
        perturb(reg.experts[e].w2, sigma_pert, pert);
        perturb(reg.experts[e].b2, sigma_pert, pert);
    }
    return reg;
}

} // namespace moce
