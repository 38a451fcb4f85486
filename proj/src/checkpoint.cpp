#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "moce/error.hpp"
#include "moce/numio.hpp"
#include "moce/trainer.hpp"

namespace moce {
namespace {

using nlohmann::json;

json matrix_to_json(const DenseMatrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

DenseMatrix matrix_from_json(const json& j) {
    DenseMatrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.data.size())
        throw ValidationError("checkpoint: matrix data length != rows * cols");
    m.data = data;
    return m;
}

json config_to_json(const TrainConfig& cfg) {
    json a{{"kind", schedule_kind_name(cfg.anneal.kind)},
           {"midpoint", cfg.anneal.midpoint},
           {"slope", cfg.anneal.slope},
           {"lambda1", cfg.anneal.lambda1},
           {"lambda2", cfg.anneal.lambda2},
           {"total_epochs", cfg.anneal.total_epochs},
           {"swap_interpolation", cfg.anneal.swap_interpolation}};
    json breaks = json::array();
    for (const StepBreak& b : cfg.anneal.step_breaks)
        breaks.push_back(json{{"epoch", b.epoch}, {"value", b.value}});
    a["step_breaks"] = std::move(breaks);

    json stages = json::array();
    for (const CurriculumStage& s : cfg.curriculum.stages)
        stages.push_back(json{{"name", s.name},
                              {"start_epoch", s.start_epoch},
                              {"end_epoch", s.end_epoch},
                              {"severity", s.severity},
                              {"label_mask_rate", s.label_mask_rate}});

    return json{{"corpus_path", cfg.corpus_path},
                {"eval_corpus_path", cfg.eval_corpus_path},
                {"dim", cfg.dim},
                {"hidden", cfg.hidden},
                {"token_count", cfg.token_count},
                {"eval_token_count", cfg.eval_token_count},
                {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"momentum", cfg.momentum},
                {"cosine_decay", cfg.cosine_decay},
                {"weight_decay", cfg.weight_decay},
                {"anneal", std::move(a)},
                {"curriculum", json{{"stages", std::move(stages)},
                                    {"total_epochs", cfg.curriculum.total_epochs}}},
                {"beta_max", cfg.beta_max},
                {"seed", cfg.seed},
                {"freeze_general_expert", cfg.freeze_general_expert},
                {"prefit", cfg.prefit},
                {"prefit_epochs", cfg.prefit_epochs},
                {"no_confidence", cfg.ablation.no_confidence},
                {"uniform_routing", cfg.ablation.uniform_routing},
                {"single_expert", cfg.ablation.single_expert},
                {"no_struct_loss", cfg.no_struct_loss},
                {"no_role_loss", cfg.no_role_loss}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.corpus_path = j.at("corpus_path").get<std::string>();
    cfg.eval_corpus_path = j.at("eval_corpus_path").get<std::string>();
    cfg.dim = j.at("dim").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.token_count = j.at("token_count").get<int>();
    cfg.eval_token_count = j.at("eval_token_count").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.cosine_decay = j.at("cosine_decay").get<bool>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    const json& a = j.at("anneal");
    cfg.anneal.kind = schedule_kind_from_name(a.at("kind").get<std::string>());
    cfg.anneal.midpoint = a.at("midpoint").get<double>();
    cfg.anneal.slope = a.at("slope").get<double>();
    cfg.anneal.lambda1 = a.at("lambda1").get<double>();
    cfg.anneal.lambda2 = a.at("lambda2").get<double>();
    cfg.anneal.total_epochs = a.at("total_epochs").get<int>();
    cfg.anneal.swap_interpolation = a.at("swap_interpolation").get<bool>();
    for (const json& b : a.at("step_breaks"))
        cfg.anneal.step_breaks.push_back(
            StepBreak{b.at("epoch").get<double>(), b.at("value").get<double>()});
    const json& c = j.at("curriculum");
    cfg.curriculum.total_epochs = c.at("total_epochs").get<int>();
    for (const json& s : c.at("stages")) {
        CurriculumStage stage;
        stage.name = s.at("name").get<std::string>();
        stage.start_epoch = s.at("start_epoch").get<int>();
        stage.end_epoch = s.at("end_epoch").get<int>();
        stage.severity = s.at("severity").get<double>();
        stage.label_mask_rate = s.at("label_mask_rate").get<double>();
        cfg.curriculum.stages.push_back(std::move(stage));
    }
    cfg.beta_max = j.at("beta_max").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.freeze_general_expert = j.at("freeze_general_expert").get<bool>();
    cfg.prefit = j.at("prefit").get<bool>();
    cfg.prefit_epochs = j.at("prefit_epochs").get<int>();
    cfg.ablation.no_confidence = j.at("no_confidence").get<bool>();
    cfg.ablation.uniform_routing = j.at("uniform_routing").get<bool>();
    cfg.ablation.single_expert = j.at("single_expert").get<int>();
    cfg.no_struct_loss = j.at("no_struct_loss").get<bool>();
    cfg.no_role_loss = j.at("no_role_loss").get<bool>();
    return cfg;
}

void require_finite(const DenseMatrix& m, const std::string& what) {
    if (!m.all_finite()) throw NumericError("save_checkpoint: non-finite values in " + what);
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    require_finite(ckpt.model.role.weight, "role weight");
    require_finite(ckpt.model.role.bias, "role bias");
    require_finite(ckpt.model.compat.mat, "compatibility matrix");
    json experts = json::array();
    for (const ExpertParams& p : ckpt.model.experts.experts) {
        require_finite(p.w1, p.name + " w1");
        require_finite(p.b1, p.name + " b1");
        require_finite(p.w2, p.name + " w2");
        require_finite(p.b2, p.name + " b2");
        experts.push_back(json{{"name", p.name},
                               {"w1", matrix_to_json(p.w1)},
                               {"b1", matrix_to_json(p.b1)},
                               {"w2", matrix_to_json(p.w2)},
                               {"b2", matrix_to_json(p.b2)}});
    }
    const json doc{
        {"schema_version", ckpt.schema_version},
        {"model",
         json{{"role", json{{"weight", matrix_to_json(ckpt.model.role.weight)},
                            {"bias", matrix_to_json(ckpt.model.role.bias)}}},
              {"compat", matrix_to_json(ckpt.model.compat.mat)},
              {"experts", json{{"dim", ckpt.model.experts.dim},
                               {"hidden", ckpt.model.experts.hidden},
                               {"list", std::move(experts)}}}}},
        {"config", config_to_json(ckpt.config)},
        {"final_metrics",
         json{{"task_mse", ckpt.final_metrics.task_mse},
              {"role_accuracy", ckpt.final_metrics.role_accuracy},
              {"mean_alpha", ckpt.final_metrics.mean_alpha},
              {"mean_routing_entropy", ckpt.final_metrics.mean_routing_entropy},
              {"struct_violation_rate", ckpt.final_metrics.struct_violation_rate}}}};
    std::ofstream out(path);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    out << "#moce-ckpt v1\n" << doc.dump(2) << "\n";
    if (!out) throw Error("save_checkpoint: write failed on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string header;
    if (!std::getline(in, header) || header != "#moce-ckpt v1")
        throw ParseError("load_checkpoint: unrecognized checkpoint header", 1);
    std::stringstream rest;
    rest << in.rdbuf();
    const json doc = json::parse(rest.str(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ParseError("load_checkpoint: malformed checkpoint body", 2);
    Checkpoint ckpt;
    try {
        ckpt.schema_version = doc.at("schema_version").get<int>();
        if (ckpt.schema_version != 1)
            throw ValidationError("load_checkpoint: unsupported schema version " +
                                  std::to_string(ckpt.schema_version));
        const json& model = doc.at("model");
        ckpt.model.role.weight = matrix_from_json(model.at("role").at("weight"));
        ckpt.model.role.bias = matrix_from_json(model.at("role").at("bias"));
        ckpt.model.compat.mat = matrix_from_json(model.at("compat"));
        const json& ex = model.at("experts");
        ckpt.model.experts.dim = ex.at("dim").get<int>();
        ckpt.model.experts.hidden = ex.at("hidden").get<int>();
        const json& list = ex.at("list");
        if (list.size() != kExpertCount)
            throw ValidationError("load_checkpoint: expected " + std::to_string(kExpertCount) +
                                  " experts");
        for (int e = 0; e < kExpertCount; ++e) {
            ExpertParams& p = ckpt.model.experts.experts[e];
            p.name = list[e].at("name").get<std::string>();
            if (p.name != kExpertNames[e])
                throw ValidationError("load_checkpoint: expert order mismatch at index " +
                                      std::to_string(e));
            p.w1 = matrix_from_json(list[e].at("w1"));
            p.b1 = matrix_from_json(list[e].at("b1"));
            p.w2 = matrix_from_json(list[e].at("w2"));
            p.b2 = matrix_from_json(list[e].at("b2"));
        }
        ckpt.config = config_from_json(doc.at("config"));
        const json& fm = doc.at("final_metrics");
        ckpt.final_metrics.task_mse = fm.at("task_mse").get<double>();
        ckpt.final_metrics.role_accuracy = fm.at("role_accuracy").get<double>();
        ckpt.final_metrics.mean_alpha = fm.at("mean_alpha").get<double>();
        ckpt.final_metrics.mean_routing_entropy = fm.at("mean_routing_entropy").get<double>();
        ckpt.final_metrics.struct_violation_rate = fm.at("struct_violation_rate").get<double>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_checkpoint: ") + e.what(), 2);
    }
    return ckpt;
}

void write_metrics_csv(const MetricsLog& log, std::ostream& out) {
    out << "epoch,lambda_t,beta_t,stage,task_loss,role_loss,struct_loss,total_loss,"
           "eval_task_loss,mean_routing_entropy,role_accuracy\n";
    for (const MetricsRow& r : log) {
        out << r.epoch << ',' << format_double(r.lambda_t) << ',' << format_double(r.beta_t) << ','
            << r.stage << ',' << format_double(r.task_loss) << ',' << format_double(r.role_loss)
            << ',' << format_double(r.struct_loss) << ',' << format_double(r.total_loss) << ','
            << format_double(r.eval_task_loss) << ',' << format_double(r.mean_routing_entropy)
            << ',' << format_double(r.role_accuracy) << '\n';
    }
}

void write_metrics_csv(const MetricsLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("write_metrics_csv: cannot open " + path);
    write_metrics_csv(log, out);
    if (!out) throw Error("write_metrics_csv: write failed on " + path);
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool parse_bool(const std::string& v, int line_no) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: expected boolean, got '" + v + "' (line " +
                      std::to_string(line_no) + ")");
}

template <typename T, typename Fn>
T parse_num(const std::string& v, int line_no, Fn&& fn) {
    try {
        std::size_t used = 0;
        const T out = fn(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number '" + v + "' (line " + std::to_string(line_no) + ")");
    }
}

int parse_i(const std::string& v, int n) {
    return parse_num<int>(v, n, [](const std::string& s, std::size_t* u) { return std::stoi(s, u); });
}
double parse_d(const std::string& v, int n) {
    return parse_num<double>(v, n, [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}
std::uint64_t parse_u64(const std::string& v, int n) {
    return parse_num<std::uint64_t>(
        v, n, [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

} // namespace

TrainConfig parse_train_config(std::istream& in, const std::string& origin) {
    struct Entry {
        std::string key, value;
        int line_no;
    };
    std::vector<Entry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected 'key = value' in " + origin + " (line " +
                              std::to_string(line_no) + ")");
        entries.push_back(Entry{trim(t.substr(0, eq)), trim(t.substr(eq + 1)), line_no});
    }

    TrainConfig cfg;
    for (const Entry& e : entries)
        if (e.key == "epochs") cfg.epochs = parse_i(e.value, e.line_no);
    cfg.anneal = default_anneal_config(cfg.epochs);
    cfg.curriculum = CurriculumPlan::default_plan(cfg.epochs);

    for (const Entry& e : entries) {
        const std::string& k = e.key;
        const std::string& v = e.value;
        const int n = e.line_no;
        if (k == "corpus") cfg.corpus_path = v;
        else if (k == "eval_corpus") cfg.eval_corpus_path = v;
        else if (k == "dim") cfg.dim = parse_i(v, n);
        else if (k == "hidden") cfg.hidden = parse_i(v, n);
        else if (k == "token_count") cfg.token_count = parse_i(v, n);
        else if (k == "eval_token_count") cfg.eval_token_count = parse_i(v, n);
        else if (k == "epochs") cfg.epochs = parse_i(v, n);
        else if (k == "batch_size") cfg.batch_size = parse_i(v, n);
        else if (k == "learning_rate") cfg.learning_rate = parse_d(v, n);
        else if (k == "momentum") cfg.momentum = parse_d(v, n);
        else if (k == "cosine_decay") cfg.cosine_decay = parse_bool(v, n);
        else if (k == "weight_decay") cfg.weight_decay = parse_d(v, n);
        else if (k == "anneal_kind") cfg.anneal.kind = schedule_kind_from_name(v);
        else if (k == "anneal_midpoint") cfg.anneal.midpoint = parse_d(v, n);
        else if (k == "anneal_slope") cfg.anneal.slope = parse_d(v, n);
        else if (k == "lambda1") cfg.anneal.lambda1 = parse_d(v, n);
        else if (k == "lambda2") cfg.anneal.lambda2 = parse_d(v, n);
        else if (k == "swap_interpolation") cfg.anneal.swap_interpolation = parse_bool(v, n);
        else if (k == "beta_max") cfg.beta_max = parse_d(v, n);
        else if (k == "seed") cfg.seed = parse_u64(v, n);
        else if (k == "freeze_general_expert") cfg.freeze_general_expert = parse_bool(v, n);
        else if (k == "prefit") cfg.prefit = parse_bool(v, n);
        else if (k == "prefit_epochs") cfg.prefit_epochs = parse_i(v, n);
        else if (k == "curriculum") {
            if (v == "default") cfg.curriculum = CurriculumPlan::default_plan(cfg.epochs);
            else if (v == "clean") cfg.curriculum = CurriculumPlan::single_stage(cfg.epochs);
            else
                throw ConfigError("config: curriculum must be 'default' or 'clean' (line " +
                                  std::to_string(n) + ")");
        } else if (k == "no_confidence") cfg.ablation.no_confidence = parse_bool(v, n);
        else if (k == "uniform_routing") cfg.ablation.uniform_routing = parse_bool(v, n);
        else if (k == "single_expert") {
            cfg.ablation.single_expert = v == "none" ? -1 : expert_index(v);
        } else if (k == "no_struct_loss") cfg.no_struct_loss = parse_bool(v, n);
        else if (k == "no_role_loss") cfg.no_role_loss = parse_bool(v, n);
        else
            throw ConfigError("config: unknown key '" + k + "' in " + origin + " (line " +
                              std::to_string(n) + ")");
    }
    return cfg;
}

TrainConfig parse_train_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return parse_train_config(in, path);
}

} // namespace moce
