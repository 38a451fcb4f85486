#include "moce/annealing.hpp"

#include <algorithm>
#include <cmath>

#include "moce/kernels.hpp"
#include "moce/roles.hpp"

namespace moce {

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "linear") return ScheduleKind::kLinear;
    if (name == "sigmoid") return ScheduleKind::kSigmoid;
    if (name == "step") return ScheduleKind::kStep;
    throw ConfigError("unknown schedule kind: " + name);
}

std::string schedule_kind_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::kLinear: return "linear";
        case ScheduleKind::kSigmoid: return "sigmoid";
        case ScheduleKind::kStep: return "step";
    }
    return "?";
}

void AnnealConfig::validate() const {
    if (kind == ScheduleKind::kSigmoid && !(slope > 0.0))
        throw ConfigError("AnnealConfig: sigmoid slope must be > 0");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ConfigError("AnnealConfig: lambda1/lambda2 must be >= 0");
    if (kind == ScheduleKind::kLinear && total_epochs <= 0)
        throw ConfigError("AnnealConfig: linear schedule needs total_epochs > 0");
    if (kind == ScheduleKind::kStep) {
        double prev_epoch = -1.0;
        for (const StepBreak& b : step_breaks) {
            if (b.epoch <= prev_epoch)
                throw ConfigError("AnnealConfig: step breaks must be strictly increasing");
            if (b.value < 0.0 || b.value > 1.0)
                throw ConfigError("AnnealConfig: step values must lie in [0,1]");
            prev_epoch = b.epoch;
        }
    }
}

AnnealConfig default_anneal_config(int total_epochs) {
    AnnealConfig cfg;
    cfg.kind = ScheduleKind::kSigmoid;
    cfg.total_epochs = total_epochs;
    cfg.midpoint = total_epochs / 2.0;
    cfg.slope = total_epochs / 10.0;
    if (cfg.slope <= 0.0) cfg.slope = 1.0;
    return cfg;
}

double lambda_at(double t, const AnnealConfig& cfg) {
    cfg.validate();
    double v = 0.0;
    switch (cfg.kind) {
        case ScheduleKind::kSigmoid:
            v = 1.0 / (1.0 + std::exp((cfg.midpoint - t) / cfg.slope));
            break;
        case ScheduleKind::kLinear:
            v = t / static_cast<double>(cfg.total_epochs);
            break;
        case ScheduleKind::kStep:
            for (const StepBreak& b : cfg.step_breaks) {
                if (b.epoch <= t) v = b.value;
                else break;
            }
            break;
    }
    return std::clamp(v, 0.0, 1.0);
}

LossBreakdown nsa_loss(double task, double role, double struct_align, double t,
                       const AnnealConfig& cfg) {
    if (!std::isfinite(task) || !std::isfinite(role) || !std::isfinite(struct_align))
        throw NumericError("nsa_loss: non-finite component");
    if (task < 0.0 || role < 0.0 || struct_align < 0.0)
        throw ValidationError("nsa_loss: components must be >= 0");
    LossBreakdown out;
    out.task = task;
    out.role = role;
    out.struct_align = struct_align;
    const double lambda = lambda_at(t, cfg);
    out.lambda_t = cfg.swap_interpolation ? 1.0 - lambda : lambda;
    out.total = (1.0 - out.lambda_t) * task +
                out.lambda_t * (cfg.lambda1 * role + cfg.lambda2 * struct_align);
    return out;
}

double struct_loss(const DenseMatrix& weights, const RoleDistribution& roles,
                   const DenseMatrix& alpha, const DenseMatrix& compat_graph) {
    if (compat_graph.rows != roles.probs.cols || compat_graph.cols != weights.cols)
        throw DimensionError("struct_loss: compat graph shape mismatch");
    for (int r = 0; r < compat_graph.rows; ++r) {
        bool any = false;
        for (int e = 0; e < compat_graph.cols; ++e) {
            const double v = compat_graph.at(r, e);
            if (v != 0.0 && v != 1.0)
                throw ValidationError("struct_loss: compat graph must be binary");
            any = any || v == 1.0;
        }
        if (!any)
            throw ValidationError("struct_loss: role row " + std::string(role_name(r)) +
                                  " allows no expert");
    }
    if (weights.rows != roles.probs.rows || alpha.rows != weights.rows)
        throw DimensionError("struct_loss: token counts disagree");
    if (weights.rows == 0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < weights.rows; ++i) {
        const int r = argmax_row(roles.probs.row(i));
        double mass = 0.0;
        for (int e = 0; e < weights.cols; ++e)
            mass += weights.at(i, e) * (1.0 - compat_graph.at(r, e));
        acc += alpha.at(i, 0) * mass;
    }
    return acc / weights.rows;
}

void CurriculumPlan::validate() const {
    if (stages.empty()) throw ConfigError("CurriculumPlan: no stages");
    int expect_start = 0;
    double prev_severity = -1.0;
    for (const CurriculumStage& s : stages) {
        if (s.start_epoch != expect_start)
            throw ConfigError("CurriculumPlan: stage '" + s.name + "' does not start at epoch " +
                              std::to_string(expect_start));
        if (s.end_epoch <= s.start_epoch)
            throw ConfigError("CurriculumPlan: stage '" + s.name + "' has an empty range");
        if (s.severity < 0.0 || s.severity > 1.0 || s.label_mask_rate < 0.0 || s.label_mask_rate > 1.0)
            throw ConfigError("CurriculumPlan: stage '" + s.name + "' rates must lie in [0,1]");
        if (s.severity < prev_severity)
            throw ConfigError("CurriculumPlan: severities must be nondecreasing");
        prev_severity = s.severity;
        expect_start = s.end_epoch;
    }
    if (expect_start != total_epochs)
        throw ConfigError("CurriculumPlan: stages must cover [0, total_epochs)");
}

CurriculumPlan CurriculumPlan::default_plan(int total_epochs) {
    if (total_epochs <= 0) return single_stage(total_epochs);
    CurriculumPlan plan;
    plan.total_epochs = total_epochs;
    const int first = total_epochs / 3;
    const int second = 2 * total_epochs / 3;
    if (first == 0 || second == first || second == total_epochs)
        return single_stage(total_epochs); // too few epochs for three stages
    plan.stages = {
        {"clean", 0, first, 0.0, 0.0},
        {"degraded", first, second, 0.5, 0.3},
        {"wild", second, total_epochs, 1.0, 0.6},
    };
    plan.validate();
    return plan;
}

CurriculumPlan CurriculumPlan::single_stage(int total_epochs, double severity,
                                            double label_mask_rate) {
    CurriculumPlan plan;
    plan.total_epochs = std::max(total_epochs, 1);
    plan.stages = {{"clean", 0, plan.total_epochs, severity, label_mask_rate}};
    return plan;
}

const CurriculumStage& curriculum_stage(int epoch, const CurriculumPlan& plan) {
    for (const CurriculumStage& s : plan.stages)
        if (epoch >= s.start_epoch && epoch < s.end_epoch) return s;
    throw ValidationError("curriculum_stage: epoch " + std::to_string(epoch) +
                          " outside [0, " + std::to_string(plan.total_epochs) + ")");
}

} // namespace moce
