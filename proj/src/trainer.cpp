#include "moce/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "moce/error.hpp"
#include "moce/kernels.hpp"

namespace moce {
namespace {

struct Velocity {
    DenseMatrix role_weight, role_bias, compat;
    std::array<std::array<DenseMatrix, 4>, kExpertCount> experts; // w1,b1,w2,b2
};

Velocity zero_velocity(const RoutingModel& m) {
    Velocity v;
    v.role_weight = DenseMatrix(m.role.weight.rows, m.role.weight.cols);
    v.role_bias = DenseMatrix(m.role.bias.rows, m.role.bias.cols);
    v.compat = DenseMatrix(m.compat.mat.rows, m.compat.mat.cols);
    for (int e = 0; e < kExpertCount; ++e) {
        const ExpertParams& p = m.experts.experts[e];
        v.experts[e] = {DenseMatrix(p.w1.rows, p.w1.cols), DenseMatrix(p.b1.rows, p.b1.cols),
                        DenseMatrix(p.w2.rows, p.w2.cols), DenseMatrix(p.b2.rows, p.b2.cols)};
    }
    return v;
}

void sgd_step(DenseMatrix& param, const DenseMatrix& grad, DenseMatrix& velocity, double lr,
              double momentum, double weight_decay) {
    for (std::size_t k = 0; k < param.data.size(); ++k) {
        const double g = grad.data[k] + weight_decay * param.data[k];
        velocity.data[k] = momentum * velocity.data[k] + g;
        param.data[k] -= lr * velocity.data[k];
    }
}

struct BatchView {
    TokenBatch x;
    DenseMatrix targets;
    std::vector<int> labels;
    std::vector<std::uint8_t> mask;
    int labeled = 0;
};

BatchView slice_batch(const Corpus& corpus, const std::vector<int>& order, int lo, int hi) {
    const int n = hi - lo;
    BatchView b;
    DenseMatrix data(n, corpus.dim);
    b.targets = DenseMatrix(n, corpus.dim);
    b.labels.resize(n);
    b.mask.resize(n);
    for (int i = 0; i < n; ++i) {
        const TokenRecord& rec = corpus.records[order[lo + i]];
        for (int j = 0; j < corpus.dim; ++j) {
            data.at(i, j) = rec.embedding[j];
            b.targets.at(i, j) = rec.target[j];
        }
        b.labels[i] = rec.role == kNoRole ? 0 : rec.role;
        b.mask[i] = rec.role == kNoRole ? 0 : 1;
        b.labeled += b.mask[i];
    }
    b.x = TokenBatch(1, n, std::move(data));
    return b;
}

void prefit_experts(RoutingModel& model, const Corpus& corpus, const TrainConfig& cfg) {
    const DenseMatrix prior = role_expert_prior();
    for (int e = 0; e < kExpertCount; ++e) {
        std::vector<int> keep;
        for (int i = 0; i < corpus.count(); ++i) {
            const int role = corpus.records[i].role;
            if (role != kNoRole && prior.at(role, e) == 1.0) keep.push_back(i);
        }
        if (keep.empty()) continue;
        const BatchView b = slice_batch(corpus, keep, 0, static_cast<int>(keep.size()));
        ExpertParams& p = model.experts.experts[e];
        for (int step = 0; step < cfg.prefit_epochs; ++step) {
            GradTape tape;
            const int x = tape.leaf(b.x.data);
            const int w1 = tape.leaf(p.w1), b1 = tape.leaf(p.b1);
            const int w2 = tape.leaf(p.w2), b2 = tape.leaf(p.b2);
            const int h = tape.relu(tape.add_row(tape.matmul(x, w1), b1));
            const int y = tape.add_row(tape.matmul(h, w2), b2);
            const int loss = tape.mse_loss(y, b.targets);
            if (!std::isfinite(tape.scalar_value(loss)))
                throw NumericError("prefit: non-finite loss for expert " + p.name);
            tape.backward(loss);
            const std::array<std::pair<DenseMatrix*, int>, 4> updates{
                {{&p.w1, w1}, {&p.b1, b1}, {&p.w2, w2}, {&p.b2, b2}}};
            for (auto [param, leaf] : updates)
                for (std::size_t k = 0; k < param->data.size(); ++k)
                    param->data[k] -= cfg.learning_rate * tape.grad(leaf).data[k];
        }
    }
}

EvalMetrics evaluate_model(const RoutingModel& model, const TrainConfig& cfg, const Corpus& corpus) {
    if (corpus.dim != model.experts.dim)
        throw ValidationError("evaluate: corpus dim != model dim");
    EvalMetrics m;
    if (corpus.count() == 0) return m;
    const TokenBatch x = to_token_batch(corpus);
    const ForwardResult fr = forward(x, model, cfg.beta_max, cfg.ablation);
    m.task_mse = mean_squared_error(fr.fused.data, targets_matrix(corpus));
    const std::vector<int> pred = role_argmax(fr.roles);
    const DenseMatrix prior = role_expert_prior();
    int labeled = 0, correct = 0, violations = 0;
    double alpha_sum = 0.0, entropy_sum = 0.0;
    const DenseMatrix weight_entropy = entropy_rows(fr.state.weights);
    for (int i = 0; i < corpus.count(); ++i) {
        const int truth = corpus.records[i].role;
        if (truth != kNoRole) {
            ++labeled;
            correct += pred[i] == truth;
        }
        alpha_sum += fr.state.alpha.at(i, 0);
        entropy_sum += weight_entropy.at(i, 0);
        const int top = argmax_row(fr.state.weights.row(i));
        violations += prior.at(pred[i], top) == 0.0;
    }
    m.role_accuracy = labeled == 0 ? 0.0 : static_cast<double>(correct) / labeled;
    m.mean_alpha = alpha_sum / corpus.count();
    m.mean_routing_entropy = entropy_sum / corpus.count();
    m.struct_violation_rate = static_cast<double>(violations) / corpus.count();
    return m;
}

} // namespace

void TrainConfig::validate() const {
    if (dim < 1 || hidden < 1) throw ConfigError("TrainConfig: dim and hidden must be >= 1");
    if (token_count < 0 || eval_token_count < 0)
        throw ConfigError("TrainConfig: token counts must be >= 0");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("TrainConfig: momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    if (!(beta_max >= 1.0)) throw ConfigError("TrainConfig: beta_max must be >= 1");
    if (prefit && prefit_epochs < 1) throw ConfigError("TrainConfig: prefit_epochs must be >= 1");
    if (ablation.single_expert >= kExpertCount)
        throw ConfigError("TrainConfig: single_expert index out of range");
    if (ablation.single_expert >= 0 && ablation.uniform_routing)
        throw ConfigError("TrainConfig: single_expert excludes uniform_routing");
    anneal.validate();
    if (epochs > 0) {
        if (curriculum.total_epochs != epochs)
            throw ConfigError("TrainConfig: curriculum must cover exactly the training epochs");
        curriculum.validate();
    }
}

TrainConfig default_toy_config() {
    TrainConfig cfg;
    cfg.anneal = default_anneal_config(cfg.epochs);
    cfg.curriculum = CurriculumPlan::default_plan(cfg.epochs);
    return cfg;
}

double beta_at(int epoch, int total_epochs, double beta_max) {
    if (total_epochs <= 1) return beta_max;
    const double t = static_cast<double>(epoch) / (total_epochs - 1);
    return 1.0 + (beta_max - 1.0) * std::clamp(t, 0.0, 1.0);
}

RoutingModel init_model(const TrainConfig& cfg) {
    RoutingModel m;
    m.role = init_role_classifier(cfg.seed, cfg.dim);
    m.compat = init_compatibility(cfg.seed);
    m.experts = init_warm_start(cfg.seed, cfg.dim, cfg.hidden);
    return m;
}

TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus, const Corpus& eval_corpus) {
    cfg.validate();
    if (train_corpus.dim != cfg.dim || eval_corpus.dim != cfg.dim)
        throw ValidationError("train: corpus dim != configured dim");

    RoutingModel model = init_model(cfg);
    if (cfg.prefit) prefit_experts(model, train_corpus, cfg);
    Velocity vel = zero_velocity(model);

    DenseMatrix incompat = role_expert_prior();
    for (double& v : incompat.data) v = 1.0 - v;

    const RngStream root(cfg.seed);
    MetricsLog log;
    log.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const CurriculumStage& stage = curriculum_stage(epoch, cfg.curriculum);
        DegradationConfig dc = degradation_for_severity(stage.severity);
        dc.label_mask_rate = stage.label_mask_rate;
        const std::uint64_t view_seed =
            root.split("degrade").split(static_cast<std::uint64_t>(epoch)).next_u64();
        const Corpus view = degrade(train_corpus, dc, view_seed);

        std::vector<int> order(view.count());
        for (int i = 0; i < view.count(); ++i) order[i] = i;
        RngStream shuffle = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
        for (int i = view.count() - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        const double lambda = lambda_at(epoch, cfg.anneal);
        const double lambda_eff = cfg.anneal.swap_interpolation ? 1.0 - lambda : lambda;
        const double beta = beta_at(epoch, cfg.epochs, cfg.beta_max);
        const double lr = cfg.cosine_decay
                              ? cfg.learning_rate * 0.5 *
                                    (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs))
                              : cfg.learning_rate;

        double task_sum = 0.0, role_sum = 0.0, struct_sum = 0.0, total_sum = 0.0;
        long token_total = 0, labeled_total = 0;
        const int batches = (view.count() + cfg.batch_size - 1) / cfg.batch_size;
        for (int b = 0; b < batches; ++b) {
            const int lo = b * cfg.batch_size;
            const int hi = std::min(view.count(), lo + cfg.batch_size);
            BatchView bv = slice_batch(view, order, lo, hi);

            GradTape tape;
            ModelLeaves leaves;
            int task = -1, role = -1, structural = -1, total = -1;
            try {
                leaves = bind_model(tape, model);
                const TapedForward tf = taped_forward(tape, leaves, bv.x, beta, cfg.ablation);
                task = tape.mse_loss(tf.fused, bv.targets);
                role = tape.masked_nll(tf.role_probs, bv.labels, bv.mask);
                std::vector<int> pred(bv.x.count());
                for (int i = 0; i < bv.x.count(); ++i)
                    pred[i] = argmax_row(tape.value(tf.role_probs).row(i));
                structural = tape.struct_penalty(tf.weights, tf.alpha, std::move(pred), incompat);
                const double c_task = 1.0 - lambda_eff;
                const double c_role = cfg.no_role_loss ? 0.0 : lambda_eff * cfg.anneal.lambda1;
                const double c_struct = cfg.no_struct_loss ? 0.0 : lambda_eff * cfg.anneal.lambda2;
                total = tape.combine({task, role, structural}, {c_task, c_role, c_struct});
                if (!std::isfinite(tape.scalar_value(total)))
                    throw NumericError("non-finite loss");
                tape.backward(total);
            } catch (const NumericError& e) {
                throw NumericError("train: " + std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch) + " batch " + std::to_string(b));
            }

            const int n = hi - lo;
            task_sum += tape.scalar_value(task) * n;
            role_sum += tape.scalar_value(role) * bv.labeled;
            struct_sum += tape.scalar_value(structural) * n;
            total_sum += tape.scalar_value(total) * n;
            token_total += n;
            labeled_total += bv.labeled;

            sgd_step(model.role.weight, tape.grad(leaves.role_weight), vel.role_weight, lr,
                     cfg.momentum, cfg.weight_decay);
            sgd_step(model.role.bias, tape.grad(leaves.role_bias), vel.role_bias, lr, cfg.momentum,
                     cfg.weight_decay);
            sgd_step(model.compat.mat, tape.grad(leaves.compat), vel.compat, lr, cfg.momentum,
                     cfg.weight_decay);
            for (int e = 0; e < kExpertCount; ++e) {
                if (cfg.freeze_general_expert && e == kGeneral) continue;
                ExpertParams& p = model.experts.experts[e];
                const ExpertLeaves& el = leaves.experts[e];
                sgd_step(p.w1, tape.grad(el.w1), vel.experts[e][0], lr, cfg.momentum, cfg.weight_decay);
                sgd_step(p.b1, tape.grad(el.b1), vel.experts[e][1], lr, cfg.momentum, cfg.weight_decay);
                sgd_step(p.w2, tape.grad(el.w2), vel.experts[e][2], lr, cfg.momentum, cfg.weight_decay);
                sgd_step(p.b2, tape.grad(el.b2), vel.experts[e][3], lr, cfg.momentum, cfg.weight_decay);
            }
        }

        const EvalMetrics em = evaluate_model(model, cfg, eval_corpus);
        MetricsRow row;
        row.epoch = epoch;
        row.lambda_t = lambda;
        row.beta_t = beta;
        row.stage = stage.name;
        row.task_loss = token_total == 0 ? 0.0 : task_sum / token_total;
        row.role_loss = labeled_total == 0 ? 0.0 : role_sum / labeled_total;
        row.struct_loss = token_total == 0 ? 0.0 : struct_sum / token_total;
        row.total_loss = token_total == 0 ? 0.0 : total_sum / token_total;
        row.eval_task_loss = em.task_mse;
        row.mean_routing_entropy = em.mean_routing_entropy;
        row.role_accuracy = em.role_accuracy;
        log.push_back(std::move(row));
    }

    TrainResult result;
    result.checkpoint.schema_version = 1;
    result.checkpoint.model = std::move(model);
    result.checkpoint.config = cfg;
    result.checkpoint.final_metrics = evaluate_model(result.checkpoint.model, cfg, eval_corpus);
    result.log = std::move(log);
    return result;
}

TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    Corpus train_corpus;
    if (cfg.corpus_path.empty()) {
        train_corpus = gen_corpus(default_corpus_spec(cfg.dim, cfg.token_count, cfg.seed));
    } else {
        train_corpus = read_corpus(cfg.corpus_path);
    }
    Corpus eval_corpus;
    if (cfg.eval_corpus_path.empty()) {
        CorpusSpec spec = default_corpus_spec(cfg.dim, cfg.eval_token_count, cfg.seed);
        spec.seed = RngStream(cfg.seed).split("eval_corpus").next_u64();
        eval_corpus = gen_corpus(spec);
    } else {
        eval_corpus = read_corpus(cfg.eval_corpus_path);
    }
    return train(cfg, train_corpus, eval_corpus);
}

EvalMetrics evaluate(const Checkpoint& ckpt, const Corpus& corpus) {
    return evaluate_model(ckpt.model, ckpt.config, corpus);
}

} // namespace moce
