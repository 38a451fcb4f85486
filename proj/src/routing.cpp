#include "moce/routing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "moce/kernels.hpp"
#include "moce/numio.hpp"
#include "moce/rng.hpp"

namespace moce {

DenseMatrix role_expert_prior() {
    DenseMatrix prior(kRoleCount, kExpertCount);
    prior.at(kHeader, kHtml) = 1.0;
    prior.at(kAxis, kHtml) = 1.0;
    prior.at(kData, kJson) = 1.0;
    prior.at(kUnit, kJson) = 1.0;
    prior.at(kTotal, kJson) = 1.0;
    prior.at(kFormula, kCode) = 1.0;
    prior.at(kText, kGeneral) = 1.0;
    prior.at(kAnnotation, kGeneral) = 1.0;
    prior.at(kEmpty, kGeneral) = 1.0;
    return prior;
}

CompatibilityMatrix init_compatibility(std::uint64_t seed, double noise_sigma) {
    RngStream rng = RngStream(seed).split("compatibility");
    CompatibilityMatrix compat{role_expert_prior()};
    if (noise_sigma > 0.0)
        for (double& v : compat.mat.data) v += noise_sigma * rng.next_gaussian();
    return compat;
}

DenseMatrix affinity(const RoleDistribution& roles, const CompatibilityMatrix& compat) {
    if (roles.probs.cols != compat.mat.rows)
        throw DimensionError("affinity: role count does not match compatibility rows");
    return matmul(roles.probs, compat.mat);
}

DenseMatrix confidence(const RoleDistribution& roles) {
    return confidence_from_entropy(entropy_rows(roles.probs), roles.probs.cols);
}

DenseMatrix routing_weights(const DenseMatrix& affinities, const DenseMatrix& alpha,
                            double anneal_gain) {
    if (anneal_gain < 0.0) throw ValidationError("routing_weights: anneal gain must be >= 0");
    return softmax_rows(row_scale(affinities, alpha, anneal_gain));
}

FusedBatch fuse(const std::vector<DenseMatrix>& expert_outputs, const DenseMatrix& weights,
                int batch, int tokens) {
    FusedBatch out;
    out.batch = batch;
    out.tokens = tokens;
    out.data = fuse_weighted(expert_outputs, weights);
    return out;
}

namespace {

DenseMatrix one_hot_weights(int rows, int expert) {
    DenseMatrix w(rows, kExpertCount);
    for (int i = 0; i < rows; ++i) w.at(i, expert) = 1.0;
    return w;
}

DenseMatrix uniform_weights(int rows) {
    return DenseMatrix(rows, kExpertCount, 1.0 / kExpertCount);
}

} // namespace

ForwardResult forward(const TokenBatch& x, const RoutingModel& model, double anneal_gain,
                      const AblationFlags& flags) {
    ForwardResult r;
    r.roles = predict_roles(x, model.role);
    r.state.anneal_gain = anneal_gain;
    r.state.affinities = affinity(r.roles, model.compat);
    r.state.alpha = flags.no_confidence ? DenseMatrix(x.count(), 1, 1.0) : confidence(r.roles);

    if (flags.single_expert >= 0) {
        r.state.weights = one_hot_weights(x.count(), flags.single_expert);
        r.fused.batch = x.batch;
        r.fused.tokens = x.tokens;
        r.fused.data = expert_forward(x.data, model.experts.experts[flags.single_expert]);
        return r;
    }
    if (flags.uniform_routing) {
        r.state.weights = uniform_weights(x.count());
    } else {
        r.state.weights = routing_weights(r.state.affinities, r.state.alpha, anneal_gain);
    }
    std::vector<DenseMatrix> outputs;
    outputs.reserve(kExpertCount);
    for (int e = 0; e < kExpertCount; ++e)
        outputs.push_back(expert_forward(x.data, model.experts.experts[e]));
    r.fused = fuse(outputs, r.state.weights, x.batch, x.tokens);
    return r;
}

FusedBatch oracle_forward(const TokenBatch& x, const RoutingModel& model, double anneal_gain) {
    const int dim = x.dim();
    const int hidden = model.experts.hidden;
    const int role_count = model.role.weight.cols;
    if (role_count < 2) throw ConfigError("oracle_forward: role count must be >= 2");

    FusedBatch out;
    out.batch = x.batch;
    out.tokens = x.tokens;
    out.data = DenseMatrix(x.count(), dim);

    std::vector<double> logits(role_count), probs(role_count);
    std::vector<double> aff(kExpertCount), gate(kExpertCount), wts(kExpertCount);
    std::vector<double> h1(hidden), y(dim);

    for (int i = 0; i < x.count(); ++i) {
        for (int r = 0; r < role_count; ++r) {
            double acc = model.role.bias.at(0, r);
            for (int d = 0; d < dim; ++d) acc += x.data.at(i, d) * model.role.weight.at(d, r);
            logits[r] = acc;
        }
        double max_logit = logits[0];
        for (int r = 1; r < role_count; ++r) max_logit = std::max(max_logit, logits[r]);
        double sum = 0.0;
        for (int r = 0; r < role_count; ++r) {
            probs[r] = std::exp(logits[r] - max_logit);
            sum += probs[r];
        }
        for (int r = 0; r < role_count; ++r) probs[r] /= sum;

        double entropy = 0.0;
        for (int r = 0; r < role_count; ++r)
            entropy -= probs[r] * std::log(std::max(probs[r], kLogEps));
        double alpha = 1.0 - entropy / std::log(static_cast<double>(role_count));
        alpha = std::min(1.0, std::max(0.0, alpha));

        for (int e = 0; e < kExpertCount; ++e) {
            double acc = 0.0;
            for (int r = 0; r < role_count; ++r) acc += probs[r] * model.compat.mat.at(r, e);
            aff[e] = acc;
            gate[e] = anneal_gain * alpha * acc;
        }
        double max_gate = gate[0];
        for (int e = 1; e < kExpertCount; ++e) max_gate = std::max(max_gate, gate[e]);
        double gate_sum = 0.0;
        for (int e = 0; e < kExpertCount; ++e) {
            wts[e] = std::exp(gate[e] - max_gate);
            gate_sum += wts[e];
        }
        for (int e = 0; e < kExpertCount; ++e) wts[e] /= gate_sum;

        for (int d = 0; d < dim; ++d) y[d] = 0.0;
        for (int e = 0; e < kExpertCount; ++e) {
            const ExpertParams& p = model.experts.experts[e];
            for (int h = 0; h < hidden; ++h) {
                double acc = p.b1.at(0, h);
                for (int d = 0; d < dim; ++d) acc += x.data.at(i, d) * p.w1.at(d, h);
                h1[h] = acc > 0.0 ? acc : 0.0;
            }
            for (int d = 0; d < dim; ++d) {
                double acc = p.b2.at(0, d);
                for (int h = 0; h < hidden; ++h) acc += h1[h] * p.w2.at(h, d);
                y[d] += wts[e] * acc;
            }
        }
        for (int d = 0; d < dim; ++d) out.data.at(i, d) = y[d];
    }
    return out;
}

std::vector<RoutingRecord> routing_report(const RoutingState& state, const RoleDistribution& roles) {
    const int count = roles.count();
    if (state.weights.rows != count || state.alpha.rows != count)
        throw DimensionError("routing_report: state does not match role distribution");
    std::vector<RoutingRecord> records;
    records.reserve(count);
    for (int b = 0; b < roles.batch; ++b) {
        for (int pos = 0; pos < roles.tokens; ++pos) {
            const int i = b * roles.tokens + pos;
            RoutingRecord rec;
            rec.batch = b;
            rec.pos = pos;
            rec.role_argmax = argmax_row(roles.probs.row(i));
            rec.role_entropy_nats = entropy_nats(roles.probs.row(i));
            rec.alpha = state.alpha.at(i, 0);
            for (int e = 0; e < kExpertCount; ++e) rec.weights[e] = state.weights.at(i, e);
            rec.top_expert = argmax_row(state.weights.row(i));
            records.push_back(rec);
        }
    }
    return records;
}

void write_routing_report_csv(const std::vector<RoutingRecord>& records, std::ostream& out) {
    out << "batch,pos,role_argmax,role_entropy_nats,alpha,w_html,w_json,w_code,w_general,top_expert\n";
    for (const RoutingRecord& r : records) {
        out << r.batch << ',' << r.pos << ',' << role_name(r.role_argmax) << ','
            << format_double(r.role_entropy_nats) << ',' << format_double(r.alpha);
        for (int e = 0; e < kExpertCount; ++e) out << ',' << format_double(r.weights[e]);
        out << ',' << kExpertNames[r.top_expert] << '\n';
    }
}

ModelLeaves bind_model(GradTape& tape, const RoutingModel& model) {
    ModelLeaves leaves;
    leaves.role_weight = tape.leaf(model.role.weight);
    leaves.role_bias = tape.leaf(model.role.bias);
    leaves.compat = tape.leaf(model.compat.mat);
    for (int e = 0; e < kExpertCount; ++e) {
        const ExpertParams& p = model.experts.experts[e];
        leaves.experts[e] = {tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.w2), tape.leaf(p.b2)};
    }
    return leaves;
}

TapedForward taped_forward(GradTape& tape, const ModelLeaves& leaves, const TokenBatch& x,
                           double anneal_gain, const AblationFlags& flags) {
    if (anneal_gain < 0.0) throw ValidationError("taped_forward: anneal gain must be >= 0");
    TapedForward f;
    f.input = tape.leaf(x.data);
    const int logits = tape.add_row(tape.matmul(f.input, leaves.role_weight), leaves.role_bias);
    f.role_probs = tape.softmax_rows(logits);
    f.entropy = tape.entropy_rows(f.role_probs);
    const int role_count = tape.value(f.role_probs).cols;
    f.alpha = flags.no_confidence ? tape.leaf(DenseMatrix(x.count(), 1, 1.0))
                                  : tape.confidence(f.entropy, role_count);
    f.affinities = tape.matmul(f.role_probs, leaves.compat);

    if (flags.single_expert >= 0) {
        f.weights = tape.leaf(one_hot_weights(x.count(), flags.single_expert));
        const ExpertLeaves& ep = leaves.experts[flags.single_expert];
        const int hidden = tape.relu(tape.add_row(tape.matmul(f.input, ep.w1), ep.b1));
        f.expert_outputs[flags.single_expert] = tape.add_row(tape.matmul(hidden, ep.w2), ep.b2);
        f.fused = f.expert_outputs[flags.single_expert];
        return f;
    }
    if (flags.uniform_routing) {
        f.weights = tape.leaf(uniform_weights(x.count()));
    } else {
        f.weights = tape.softmax_rows(tape.row_scale(f.affinities, f.alpha, anneal_gain));
    }
    std::vector<int> outputs;
    outputs.reserve(kExpertCount);
    for (int e = 0; e < kExpertCount; ++e) {
        const ExpertLeaves& ep = leaves.experts[e];
        const int hidden = tape.relu(tape.add_row(tape.matmul(f.input, ep.w1), ep.b1));
        f.expert_outputs[e] = tape.add_row(tape.matmul(hidden, ep.w2), ep.b2);
        outputs.push_back(f.expert_outputs[e]);
    }
    f.fused = tape.fuse(f.weights, outputs);
    return f;
}

} // namespace moce
