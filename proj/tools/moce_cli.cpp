#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moce/grad_check.hpp"
#include "moce/numio.hpp"
#include "moce/trainer.hpp"

namespace {

using namespace moce;

void print_metrics(const EvalMetrics& m) {
    std::cout << "task_mse=" << format_double(m.task_mse) << "\n"
              << "role_accuracy=" << format_double(m.role_accuracy) << "\n"
              << "mean_alpha=" << format_double(m.mean_alpha) << "\n"
              << "mean_routing_entropy=" << format_double(m.mean_routing_entropy) << "\n"
              << "struct_violation_rate=" << format_double(m.struct_violation_rate) << "\n";
}

std::vector<StepBreak> parse_breaks(const std::string& text) {
    std::vector<StepBreak> breaks;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schedule: breaks must be epoch:value pairs, got '" + item + "'");
        breaks.push_back(StepBreak{parse_double(item.substr(0, colon)),
                                   parse_double(item.substr(colon + 1))});
        pos = comma + 1;
    }
    return breaks;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-connector-experts routing workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic role-labeled corpus");
    std::string gen_out;
    int gen_tokens = 9000, gen_dim = 8;
    std::uint64_t gen_seed = 42;
    double gen_sep = 4.0;
    gen->add_option("--out", gen_out, "Corpus file to write")->required();
    gen->add_option("--tokens", gen_tokens, "Token count");
    gen->add_option("--dim", gen_dim, "Embedding dimension");
    gen->add_option("--seed", gen_seed, "Generation seed");
    gen->add_option("--separation", gen_sep, "Role cluster separation");

    auto* deg = app.add_subcommand("degrade", "Apply degradation operators to a corpus");
    std::string deg_in, deg_out;
    double deg_severity = -1.0;
    double deg_mask = 0.0, deg_sigma = 0.0, deg_drop = 0.0, deg_flip = 0.0;
    std::uint64_t deg_seed = 0;
    deg->add_option("--in", deg_in, "Corpus file to read")->required();
    deg->add_option("--out", deg_out, "Corpus file to write")->required();
    deg->add_option("--severity", deg_severity, "Severity in [0,1]; overrides the explicit rates");
    deg->add_option("--mask-rate", deg_mask, "Label mask rate");
    deg->add_option("--noise-sigma", deg_sigma, "Embedding noise sigma");
    deg->add_option("--dropout", deg_drop, "Token dropout rate");
    deg->add_option("--flip-rate", deg_flip, "Label flip rate");
    deg->add_option("--seed", deg_seed, "Degradation seed");

    auto* tr = app.add_subcommand("train", "Train the routing pipeline");
    std::string tr_config, tr_out, tr_metrics;
    std::uint64_t tr_seed = 0;
    int tr_epochs = 0;
    tr->add_option("--config", tr_config, "Flat key = value config file");
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "Override the config seed");
    auto* tr_epochs_opt =
        tr->add_option("--epochs", tr_epochs, "Override epochs (rebuilds default schedules)");
    tr->add_option("--out", tr_out, "Checkpoint file to write");
    tr->add_option("--metrics", tr_metrics, "Metrics CSV to write");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    std::string ev_model, ev_corpus;
    double ev_severity = -1.0;
    std::uint64_t ev_seed = 0;
    ev->add_option("--model", ev_model, "Checkpoint file")->required();
    ev->add_option("--corpus", ev_corpus, "Corpus file")->required();
    ev->add_option("--severity", ev_severity, "Degrade the corpus first at this severity");
    ev->add_option("--seed", ev_seed, "Degradation seed used with --severity");

    auto* rt = app.add_subcommand("route", "Forward a corpus and dump the routing report");
    std::string rt_model, rt_corpus, rt_out;
    double rt_beta = -1.0;
    rt->add_option("--model", rt_model, "Checkpoint file")->required();
    rt->add_option("--corpus", rt_corpus, "Corpus file")->required();
    rt->add_option("--out", rt_out, "Routing report CSV")->required();
    rt->add_option("--beta", rt_beta, "Confidence gain (default: checkpoint beta_max)");

    auto* sc = app.add_subcommand("schedule", "Dump an anneal schedule as CSV");
    std::string sc_kind = "sigmoid", sc_out, sc_breaks;
    double sc_e = 0.0, sc_s = 1.0;
    int sc_epochs = 0;
    sc->add_option("--kind", sc_kind, "linear | sigmoid | step");
    sc->add_option("--e", sc_e, "Sigmoid midpoint epoch");
    sc->add_option("--s", sc_s, "Sigmoid slope");
    sc->add_option("--epochs", sc_epochs, "Epoch count to sample")->required();
    sc->add_option("--breaks", sc_breaks, "Step breaks as epoch:value,epoch:value,...");
    sc->add_option("--out", sc_out, "CSV file to write")->required();

    auto* oc = app.add_subcommand("oracle-check", "Compare forward against the scalar oracle");
    std::string oc_model, oc_corpus;
    double oc_tol = 1e-10;
    oc->add_option("--model", oc_model, "Checkpoint file")->required();
    oc->add_option("--corpus", oc_corpus, "Corpus file")->required();
    oc->add_option("--tol", oc_tol, "Max allowed elementwise difference");

    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full objective");
    std::uint64_t gc_seed = 7;
    int gc_batch = 2, gc_tokens = 4, gc_dim = 8, gc_hidden = 16;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    gc->add_option("--seed", gc_seed, "Probe seed");
    gc->add_option("--batch", gc_batch, "Batch count");
    gc->add_option("--tokens", gc_tokens, "Tokens per batch");
    gc->add_option("--dim", gc_dim, "Embedding dimension");
    gc->add_option("--hidden", gc_hidden, "Expert hidden width");
    gc->add_option("--eps", gc_eps, "Finite-difference step");
    gc->add_option("--tol", gc_tol, "Max allowed relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            CorpusSpec spec = default_corpus_spec(gen_dim, gen_tokens, gen_seed);
            spec.cluster_separation = gen_sep;
            const Corpus corpus = gen_corpus(spec);
            write_corpus(corpus, gen_out);
            std::cout << "wrote " << corpus.count() << " tokens (D=" << corpus.dim << ") to "
                      << gen_out << "\n";
        } else if (deg->parsed()) {
            const Corpus corpus = read_corpus(deg_in);
            Corpus out;
            if (deg_severity >= 0.0) {
                out = degrade_at_severity(corpus, deg_severity, deg_seed);
            } else {
                DegradationConfig cfg;
                cfg.label_mask_rate = deg_mask;
                cfg.embedding_noise_sigma = deg_sigma;
                cfg.token_dropout_rate = deg_drop;
                cfg.role_label_flip_rate = deg_flip;
                out = degrade(corpus, cfg, deg_seed);
            }
            write_corpus(out, deg_out);
            std::cout << "kept " << out.count() << " of " << corpus.count() << " tokens -> "
                      << deg_out << "\n";
        } else if (tr->parsed()) {
            TrainConfig cfg =
                tr_config.empty() ? default_toy_config() : parse_train_config_file(tr_config);
            if (tr_seed_opt->count()) cfg.seed = tr_seed;
            if (tr_epochs_opt->count()) {
                cfg.epochs = tr_epochs;
                cfg.anneal = default_anneal_config(cfg.epochs);
                cfg.curriculum = CurriculumPlan::default_plan(cfg.epochs);
            }
            const TrainResult result = train(cfg);
            if (!tr_out.empty()) save_checkpoint(result.checkpoint, tr_out);
            if (!tr_metrics.empty()) write_metrics_csv(result.log, tr_metrics);
            std::cout << "trained " << cfg.epochs << " epochs (seed " << cfg.seed << ")\n";
            print_metrics(result.checkpoint.final_metrics);
        } else if (ev->parsed()) {
            const Checkpoint ckpt = load_checkpoint(ev_model);
            Corpus corpus = read_corpus(ev_corpus);
            if (ev_severity >= 0.0) corpus = degrade_at_severity(corpus, ev_severity, ev_seed);
            print_metrics(evaluate(ckpt, corpus));
        } else if (rt->parsed()) {
            const Checkpoint ckpt = load_checkpoint(rt_model);
            const Corpus corpus = read_corpus(rt_corpus);
            const double beta = rt_beta >= 0.0 ? rt_beta : ckpt.config.beta_max;
            const ForwardResult fr =
                forward(to_token_batch(corpus), ckpt.model, beta, ckpt.config.ablation);
            const std::vector<RoutingRecord> records = routing_report(fr.state, fr.roles);
            std::ofstream out(rt_out);
            if (!out) throw Error("route: cannot open " + rt_out);
            write_routing_report_csv(records, out);
            std::cout << "wrote " << records.size() << " records to " << rt_out << "\n";
        } else if (sc->parsed()) {
            AnnealConfig cfg;
            cfg.kind = schedule_kind_from_name(sc_kind);
            cfg.midpoint = sc_e;
            cfg.slope = sc_s;
            cfg.total_epochs = sc_epochs;
            if (!sc_breaks.empty()) cfg.step_breaks = parse_breaks(sc_breaks);
            std::ofstream out(sc_out);
            if (!out) throw Error("schedule: cannot open " + sc_out);
            out << "epoch,lambda\n";
            for (int t = 0; t < sc_epochs; ++t)
                out << t << ',' << format_double(lambda_at(t, cfg)) << '\n';
            std::cout << "wrote " << sc_epochs << " rows to " << sc_out << "\n";
        } else if (oc->parsed()) {
            const Checkpoint ckpt = load_checkpoint(oc_model);
            const Corpus corpus = read_corpus(oc_corpus);
            const TokenBatch x = to_token_batch(corpus);
            const double beta = ckpt.config.beta_max;
            const FusedBatch fast = forward(x, ckpt.model, beta).fused;
            const FusedBatch oracle = oracle_forward(x, ckpt.model, beta);
            const double diff = max_abs_diff(fast.data, oracle.data);
            std::cout << "tokens=" << corpus.count() << " max_abs_diff=" << format_double(diff)
                      << " tol=" << format_double(oc_tol) << "\n";
            if (diff > oc_tol) {
                std::cerr << "oracle-check: difference exceeds tolerance\n";
                return 1;
            }
        } else if (gc->parsed()) {
            TrainConfig mc;
            mc.dim = gc_dim;
            mc.hidden = gc_hidden;
            mc.seed = gc_seed;
            RoutingModel model = init_model(mc);
            RngStream probe = RngStream(gc_seed).split("gradcheck");
            const int count = gc_batch * gc_tokens;
            const TokenBatch x(gc_batch, gc_tokens,
                               random_gaussian(count, gc_dim, 1.0, probe));
            const DenseMatrix targets = random_gaussian(count, gc_dim, 1.0, probe);
            std::vector<int> labels(count);
            for (int& l : labels) l = static_cast<int>(probe.next_below(kRoleCount));
            const std::vector<std::uint8_t> mask(count, 1);
            DenseMatrix incompat = role_expert_prior();
            for (double& v : incompat.data) v = 1.0 - v;
            const double beta = 2.0, lam = 0.5;

            std::vector<int> pred;
            auto build = [&](GradTape& tape, ModelLeaves& leaves) {
                leaves = bind_model(tape, model);
                const TapedForward tf = taped_forward(tape, leaves, x, beta);
                if (pred.empty())
                    for (int i = 0; i < count; ++i)
                        pred.push_back(argmax_row(tape.value(tf.role_probs).row(i)));
                const int task = tape.mse_loss(tf.fused, targets);
                const int role = tape.masked_nll(tf.role_probs, labels, mask);
                const int st = tape.struct_penalty(tf.weights, tf.alpha, pred, incompat);
                return tape.combine({task, role, st}, {1.0 - lam, lam * 1.0, lam * 0.5});
            };

            GradTape tape;
            ModelLeaves leaves;
            const int total = build(tape, leaves);
            tape.backward(total);

            std::vector<NamedParam> params;
            std::vector<const DenseMatrix*> analytic;
            std::vector<DenseMatrix> grads;
            grads.reserve(3 + 4 * kExpertCount);
            auto push = [&](const std::string& name, DenseMatrix* p, int leaf) {
                params.push_back(NamedParam{name, p});
                grads.push_back(tape.grad(leaf));
            };
            push("role.weight", &model.role.weight, leaves.role_weight);
            push("role.bias", &model.role.bias, leaves.role_bias);
            push("compat", &model.compat.mat, leaves.compat);
            for (int e = 0; e < kExpertCount; ++e) {
                ExpertParams& p = model.experts.experts[e];
                const ExpertLeaves& el = leaves.experts[e];
                push(p.name + ".w1", &p.w1, el.w1);
                push(p.name + ".b1", &p.b1, el.b1);
                push(p.name + ".w2", &p.w2, el.w2);
                push(p.name + ".b2", &p.b2, el.b2);
            }
            for (const DenseMatrix& g : grads) analytic.push_back(&g);

            auto loss_fn = [&]() {
                GradTape t;
                ModelLeaves l;
                return t.scalar_value(build(t, l));
            };
            const GradCheckReport report = finite_diff_check(loss_fn, params, analytic, gc_eps);
            for (const GradCheckRow& row : report.rows)
                std::cout << row.name << " max_rel_error=" << format_double(row.max_rel_error)
                          << " max_abs_error=" << format_double(row.max_abs_error) << "\n";
            std::cout << "max_rel_error=" << format_double(report.max_rel_error)
                      << " tol=" << format_double(gc_tol) << "\n";
            if (report.max_rel_error > gc_tol) {
                std::cerr << "grad-check: relative error exceeds tolerance\n";
                return 1;
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
