#pragma once

#include <string>
#include <vector>

#include "moce/batch.hpp"
#include "moce/matrix.hpp"

namespace moce {

enum class ScheduleKind { kLinear, kSigmoid, kStep };

ScheduleKind schedule_kind_from_name(const std::string& name);
std::string schedule_kind_name(ScheduleKind kind);

struct StepBreak {
    double epoch = 0.0;
    double value = 0.0;
};

// Symbolic-weight schedule lambda(t) plus the static sub-weights that split
// the symbolic loss between role supervision and structural compatibility.
struct AnnealConfig {
    ScheduleKind kind = ScheduleKind::kSigmoid;
    double midpoint = 0.0; // sigmoid center epoch
    double slope = 1.0;    // sigmoid width; must be > 0
    double lambda1 = 1.0;  // role-loss weight
    double lambda2 = 0.5;  // struct-loss weight
    int total_epochs = 0;
    std::vector<StepBreak> step_breaks;
    // Swaps which side of the interpolation the task loss sits on. Off by
    // default; kept reachable for experiments.
    bool swap_interpolation = false;

    void validate() const;
};

AnnealConfig default_anneal_config(int total_epochs);

/// lambda(t) in [0,1]. Sigmoid: 1/(1+exp((midpoint-t)/slope));
/// linear: clamp(t/total_epochs); step: piecewise-constant (0 before the
/// first break).
double lambda_at(double t, const AnnealConfig& cfg);

struct LossBreakdown {
    double task = 0.0;
    double role = 0.0;
    double struct_align = 0.0;
    double lambda_t = 0.0; // effective symbolic weight
    double total = 0.0;
};

/// total = (1 - lambda(t)) * task + lambda(t) * (lambda1 * role + lambda2 * struct).
/// With swap_interpolation the roles of lambda and 1-lambda trade places;
/// lambda_t always records the effective symbolic weight, so the identity
/// above holds for the breakdown either way.
LossBreakdown nsa_loss(double task, double role, double struct_align, double t,
                       const AnnealConfig& cfg);

/// Confidence-weighted routing mass on role-incompatible experts, averaged
/// over tokens: mean_i alpha_i * sum_e w[i][e] * (1 - graph[argmax_role(i)][e]).
/// compat_graph is binary R x E; every role row needs at least one allowed expert.
double struct_loss(const DenseMatrix& weights, const RoleDistribution& roles,
                   const DenseMatrix& alpha, const DenseMatrix& compat_graph);

struct CurriculumStage {
    std::string name;
    int start_epoch = 0;
    int end_epoch = 0; // exclusive
    double severity = 0.0;
    double label_mask_rate = 0.0;
};

struct CurriculumPlan {
    std::vector<CurriculumStage> stages;
    int total_epochs = 0;

    void validate() const;
    static CurriculumPlan default_plan(int total_epochs);
    static CurriculumPlan single_stage(int total_epochs, double severity = 0.0,
                                       double label_mask_rate = 0.0);
};

const CurriculumStage& curriculum_stage(int epoch, const CurriculumPlan& plan);

} // namespace moce
