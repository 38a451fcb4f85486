#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "moce/batch.hpp"
#include "moce/experts.hpp"
#include "moce/roles.hpp"
#include "moce/tape.hpp"

namespace moce {

// Learned role -> expert affinity map, R x E.
struct CompatibilityMatrix {
    DenseMatrix mat;
};

/// Binary role/expert prior: HEADER,AXIS -> HTML; DATA,UNIT,TOTAL -> JSON;
/// FORMULA -> Code; TEXT,ANNOTATION,EMPTY -> General.
DenseMatrix role_expert_prior();

/// Prior plus Gaussian noise (sigma default 0.01).
CompatibilityMatrix init_compatibility(std::uint64_t seed, double noise_sigma = 0.01);

struct RoutingState {
    DenseMatrix affinities; // (B*N) x E
    DenseMatrix alpha;      // (B*N) x 1, in [0,1]
    DenseMatrix weights;    // (B*N) x E, simplex rows
    double anneal_gain = 1.0;
};

struct RoutingModel {
    RoleClassifierParams role;
    CompatibilityMatrix compat;
    ExpertRegistry experts;
};

struct AblationFlags {
    bool no_confidence = false;  // force alpha = 1
    bool uniform_routing = false; // force w = 1/E
    int single_expert = -1;      // route everything to this expert when >= 0
};

struct ForwardResult {
    FusedBatch fused;
    RoutingState state;
    RoleDistribution roles;
};

DenseMatrix affinity(const RoleDistribution& roles, const CompatibilityMatrix& compat);
DenseMatrix confidence(const RoleDistribution& roles); // M x 1
DenseMatrix routing_weights(const DenseMatrix& affinities, const DenseMatrix& alpha, double anneal_gain);
FusedBatch fuse(const std::vector<DenseMatrix>& expert_outputs, const DenseMatrix& weights,
                int batch, int tokens);

/// Full routing pass: roles -> affinities -> confidence -> weights -> experts -> fusion.
ForwardResult forward(const TokenBatch& x, const RoutingModel& model, double anneal_gain = 1.0,
                      const AblationFlags& flags = {});

/// Independent verification oracle: recomputes the whole pass with naive
/// per-token scalar loops, sharing nothing with forward() beyond exp/log.
FusedBatch oracle_forward(const TokenBatch& x, const RoutingModel& model, double anneal_gain = 1.0);

struct RoutingRecord {
    int batch = 0;
    int pos = 0;
    int role_argmax = 0;
    double role_entropy_nats = 0.0;
    double alpha = 0.0;
    std::array<double, kExpertCount> weights{};
    int top_expert = 0;
};

/// One record per token, batch-major then position.
std::vector<RoutingRecord> routing_report(const RoutingState& state, const RoleDistribution& roles);

/// CSV columns: batch,pos,role_argmax,role_entropy_nats,alpha,w_html,w_json,w_code,w_general,top_expert
void write_routing_report_csv(const std::vector<RoutingRecord>& records, std::ostream& out);

// --- taped pipeline (training path) ---

struct ExpertLeaves {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

struct ModelLeaves {
    int role_weight = -1;
    int role_bias = -1;
    int compat = -1;
    std::array<ExpertLeaves, kExpertCount> experts;
};

struct TapedForward {
    int input = -1;
    int role_probs = -1;
    int entropy = -1;
    int alpha = -1;
    int affinities = -1;
    int weights = -1;
    int fused = -1;
    std::array<int, kExpertCount> expert_outputs{-1, -1, -1, -1};
};

/// Registers every model parameter as a tape leaf.
ModelLeaves bind_model(GradTape& tape, const RoutingModel& model);

/// Records the routing pass on the tape. Mirrors forward() bit-exactly.
TapedForward taped_forward(GradTape& tape, const ModelLeaves& leaves, const TokenBatch& x,
                           double anneal_gain, const AblationFlags& flags = {});

} // namespace moce
