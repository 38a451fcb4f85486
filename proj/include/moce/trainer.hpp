#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "moce/annealing.hpp"
#include "moce/data_synth.hpp"
#include "moce/routing.hpp"

namespace moce {

struct TrainConfig {
    std::string corpus_path;      // empty: synthesize token_count tokens from seed
    std::string eval_corpus_path; // empty: synthesize a held-out corpus (same target maps)
    int dim = 8;
    int hidden = 16;
    int token_count = 9000;       // synthesized-corpus sizes
    int eval_token_count = 1000;
    int epochs = 200;
    int batch_size = 256;
    double learning_rate = 0.05;
    double momentum = 0.9;        // 0 disables the velocity term
    bool cosine_decay = true;
    double weight_decay = 0.0;
    AnnealConfig anneal;
    CurriculumPlan curriculum;
    double beta_max = 4.0;        // confidence-gain ramp ceiling
    std::uint64_t seed = 42;
    bool freeze_general_expert = false;
    bool prefit = false;          // per-expert pre-fit on its role-conditioned sub-task
    int prefit_epochs = 10;
    AblationFlags ablation;
    bool no_struct_loss = false;
    bool no_role_loss = false;

    void validate() const;
};

/// D=8, H=16, 9000 tokens, 200 epochs, seed 42, default anneal + curriculum.
TrainConfig default_toy_config();

struct EvalMetrics {
    double task_mse = 0.0;
    double role_accuracy = 0.0;   // over labeled tokens; 0 when none are labeled
    double mean_alpha = 0.0;
    double mean_routing_entropy = 0.0;
    double struct_violation_rate = 0.0; // top expert off the binary role prior
};

struct MetricsRow {
    int epoch = 0;
    double lambda_t = 0.0;
    double beta_t = 0.0;
    std::string stage;
    double task_loss = 0.0;
    double role_loss = 0.0;
    double struct_loss = 0.0;
    double total_loss = 0.0;
    double eval_task_loss = 0.0;
    double mean_routing_entropy = 0.0;
    double role_accuracy = 0.0;
};

using MetricsLog = std::vector<MetricsRow>;

struct Checkpoint {
    int schema_version = 1;
    RoutingModel model;
    TrainConfig config;
    EvalMetrics final_metrics;
};

struct TrainResult {
    Checkpoint checkpoint;
    MetricsLog log;
};

/// Confidence-gain ramp beta(t): 1 at epoch 0, rising linearly to beta_max at
/// the last epoch; beta_max outright for runs of fewer than two epochs.
double beta_at(int epoch, int total_epochs, double beta_max);

/// Fresh parameters for the configured shapes (classifier, compatibility,
/// warm-start experts), all derived from cfg.seed.
RoutingModel init_model(const TrainConfig& cfg);

/// Mini-batch gradient descent on the annealed objective. The curriculum
/// stage corrupts each epoch's view of the training corpus on the fly.
/// Deterministic: identical (cfg, corpora) give bit-identical results.
TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus, const Corpus& eval_corpus);

/// Loads corpora from the configured paths, synthesizing either one that has
/// no path (held-out eval shares the training corpus's target maps).
TrainResult train(const TrainConfig& cfg);

/// Pure evaluation under the checkpoint's own ablation flags and its
/// end-of-ramp confidence gain. No parameter mutation.
EvalMetrics evaluate(const Checkpoint& ckpt, const Corpus& corpus);

/// "#moce-ckpt v1" header plus one structured document; floats carry full
/// round-trip precision so a reloaded checkpoint forwards bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_metrics_csv(const MetricsLog& log, std::ostream& out);
void write_metrics_csv(const MetricsLog& log, const std::string& path);

/// Flat "key = value" file mirroring TrainConfig fields ('#' comments,
/// blank lines allowed). Unknown keys are config errors.
TrainConfig parse_train_config(std::istream& in, const std::string& origin);
TrainConfig parse_train_config_file(const std::string& path);

} // namespace moce
