#include "moce/data_synth.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "json.hpp"
#include "moce/error.hpp"
#include "moce/roles.hpp"

namespace moce {
namespace {

bool bits_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bits_equal(a[i], b[i])) return false;
    return true;
}

int sample_role(const ProbVector& prior, double u) {
    double cum = 0.0;
    int last_positive = 0;
    for (int k = 0; k < prior.dim(); ++k) {
        if (prior.p[k] > 0.0) last_positive = k;
        cum += prior.p[k];
        if (u < cum) return k;
    }
    return last_positive; // u landed in the rounding slack past the last bin
}

} // namespace

bool bitwise_equal(const TokenRecord& a, const TokenRecord& b) {
    return a.id == b.id && a.role == b.role && bits_equal(a.severity, b.severity) &&
           bits_equal(a.embedding, b.embedding) && bits_equal(a.target, b.target);
}

bool bitwise_equal(const Corpus& a, const Corpus& b) {
    if (a.dim != b.dim || a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i)
        if (!bitwise_equal(a.records[i], b.records[i])) return false;
    return true;
}

void CorpusSpec::validate() const {
    if (token_count < 0) throw ValidationError("CorpusSpec: token_count must be >= 0");
    if (dim < 1) throw ValidationError("CorpusSpec: dim must be >= 1");
    if (role_prior.dim() != kRoleCount)
        throw DimensionError("CorpusSpec: role_prior must cover all roles");
    role_prior.validate();
    if (!(cluster_separation > 0.0))
        throw ValidationError("CorpusSpec: cluster_separation must be > 0");
    if (static_cast<int>(target_maps.size()) != kRoleCount)
        throw DimensionError("CorpusSpec: one target map per role required");
    for (const DenseMatrix& m : target_maps)
        if (m.rows != dim || m.cols != dim)
            throw DimensionError("CorpusSpec: target maps must be D x D");
}

CorpusSpec default_corpus_spec(int dim, int token_count, std::uint64_t seed) {
    if (dim < 4) throw ValidationError("default_corpus_spec: dim must be >= 4");
    CorpusSpec spec;
    spec.token_count = token_count;
    spec.dim = dim;
    spec.seed = seed;
    spec.cluster_separation = 4.0;
    // Skew toward DATA and UNIT; the rest share the remaining mass evenly.
    std::vector<double> prior(kRoleCount, 0.5 / 7.0);
    prior[kData] = 0.30;
    prior[kUnit] = 0.20;
    spec.role_prior = ProbVector{std::move(prior)};
    RngStream maps = RngStream(seed).split("target_maps");
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    spec.target_maps.reserve(kRoleCount);
    for (int k = 0; k < kRoleCount; ++k) {
        RngStream mk = maps.split(static_cast<std::uint64_t>(k));
        spec.target_maps.push_back(random_gaussian(dim, dim, sigma, mk));
    }
    return spec;
}

std::vector<double> role_cluster_mean(int role, int dim, double separation) {
    std::vector<double> mean(dim);
    for (int j = 0; j < dim; ++j) {
        const bool flip = j < 63 && ((static_cast<std::uint64_t>(role) >> j) & 1u);
        mean[j] = flip ? -separation : separation;
    }
    return mean;
}

Corpus gen_corpus(const CorpusSpec& spec) {
    spec.validate();
    Corpus corpus;
    corpus.dim = spec.dim;
    corpus.records.reserve(spec.token_count);
    RngStream root(spec.seed);
    RngStream roles_rng = root.split("roles");
    RngStream noise_rng = root.split("noise");
    for (int i = 0; i < spec.token_count; ++i) {
        TokenRecord rec;
        rec.id = i;
        rec.role = sample_role(spec.role_prior, roles_rng.next_uniform());
        rec.embedding = role_cluster_mean(rec.role, spec.dim, spec.cluster_separation);
        for (double& v : rec.embedding) v += noise_rng.next_gaussian();
        rec.target.assign(spec.dim, 0.0);
        const DenseMatrix& map = spec.target_maps[rec.role];
        for (int r = 0; r < spec.dim; ++r) {
            double acc = 0.0;
            for (int c = 0; c < spec.dim; ++c) acc += map.at(r, c) * rec.embedding[c];
            rec.target[r] = acc;
        }
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

void DegradationConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(label_mask_rate) || !in_unit(token_dropout_rate) || !in_unit(role_label_flip_rate))
        throw ValidationError("DegradationConfig: rates must lie in [0,1]");
    if (!(embedding_noise_sigma >= 0.0))
        throw ValidationError("DegradationConfig: embedding_noise_sigma must be >= 0");
}

bool DegradationConfig::is_identity() const {
    return label_mask_rate == 0.0 && embedding_noise_sigma == 0.0 &&
           token_dropout_rate == 0.0 && role_label_flip_rate == 0.0;
}

DegradationConfig degradation_for_severity(double severity) {
    if (severity < 0.0 || severity > 1.0)
        throw ValidationError("degradation_for_severity: severity must lie in [0,1]");
    DegradationConfig cfg;
    cfg.label_mask_rate = 0.6 * severity;
    cfg.embedding_noise_sigma = 0.5 * severity;
    cfg.token_dropout_rate = 0.05 * severity;
    cfg.role_label_flip_rate = 0.1 * severity;
    return cfg;
}

Corpus degrade(const Corpus& corpus, const DegradationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.is_identity()) return corpus;
    Corpus out;
    out.dim = corpus.dim;
    out.records.reserve(corpus.records.size());
    RngStream root(seed);
    for (const TokenRecord& rec : corpus.records) {
        RngStream tok = root.split(static_cast<std::uint64_t>(rec.id));
        if (tok.next_uniform() < cfg.token_dropout_rate) continue;
        TokenRecord copy = rec;
        if (cfg.embedding_noise_sigma > 0.0)
            for (double& v : copy.embedding)
                v += cfg.embedding_noise_sigma * tok.next_gaussian();
        if (copy.role != kNoRole && tok.next_uniform() < cfg.label_mask_rate)
            copy.role = kNoRole;
        if (copy.role != kNoRole && tok.next_uniform() < cfg.role_label_flip_rate) {
            const int shift = 1 + static_cast<int>(tok.next_below(kRoleCount - 1));
            copy.role = (copy.role + shift) % kRoleCount;
        }
        out.records.push_back(std::move(copy));
    }
    return out;
}

Corpus degrade_at_severity(const Corpus& corpus, double severity, std::uint64_t seed) {
    Corpus out = degrade(corpus, degradation_for_severity(severity), seed);
    for (TokenRecord& rec : out.records) rec.severity = severity;
    return out;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
    for (const TokenRecord& rec : corpus.records) {
        if (static_cast<int>(rec.embedding.size()) != corpus.dim ||
            static_cast<int>(rec.target.size()) != corpus.dim)
            throw DimensionError("write_corpus: record vectors must have corpus dim");
        for (double v : rec.embedding)
            if (!std::isfinite(v)) throw NumericError("write_corpus: non-finite embedding");
        for (double v : rec.target)
            if (!std::isfinite(v)) throw NumericError("write_corpus: non-finite target");
    }
    std::ofstream out(path);
    if (!out) throw Error("write_corpus: cannot open " + path);
    out << "#moce-corpus v1 D=" << corpus.dim << "\n";
    for (const TokenRecord& rec : corpus.records) {
        nlohmann::json j;
        j["id"] = rec.id;
        j["embedding"] = rec.embedding;
        if (rec.role != kNoRole) j["role"] = std::string(role_name(rec.role));
        j["target"] = rec.target;
        j["severity"] = rec.severity;
        out << j.dump() << "\n";
    }
    if (!out) throw Error("write_corpus: write failed on " + path);
}

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_corpus: cannot open " + path);
    Corpus corpus;
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!saw_header) {
            const std::string prefix = "#moce-corpus v1 D=";
            if (line.rfind(prefix, 0) != 0)
                throw ParseError("read_corpus: unrecognized corpus header", line_no);
            try {
                corpus.dim = std::stoi(line.substr(prefix.size()));
            } catch (const std::exception&) {
                throw ParseError("read_corpus: bad dimension in header", line_no);
            }
            if (corpus.dim < 1) throw ParseError("read_corpus: bad dimension in header", line_no);
            saw_header = true;
            continue;
        }
        const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError("read_corpus: malformed record", line_no);
        TokenRecord rec;
        try {
            rec.id = j.at("id").get<std::int64_t>();
            rec.embedding = j.at("embedding").get<std::vector<double>>();
            rec.target = j.at("target").get<std::vector<double>>();
            rec.severity = j.at("severity").get<double>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError("read_corpus: malformed record", line_no);
        }
        if (j.contains("role")) {
            std::string name;
            try {
                name = j.at("role").get<std::string>();
            } catch (const nlohmann::json::exception&) {
                throw ParseError("read_corpus: malformed record", line_no);
            }
            const auto idx = role_index(name);
            if (!idx)
                throw ValidationError("read_corpus: unknown role '" + name + "' (line " +
                                      std::to_string(line_no) + ")");
            rec.role = *idx;
        }
        if (static_cast<int>(rec.embedding.size()) != corpus.dim ||
            static_cast<int>(rec.target.size()) != corpus.dim)
            throw ValidationError("read_corpus: vector length != D (line " +
                                  std::to_string(line_no) + ")");
        if (!(rec.severity >= 0.0 && rec.severity <= 1.0))
            throw ValidationError("read_corpus: severity outside [0,1] (line " +
                                  std::to_string(line_no) + ")");
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

TokenBatch to_token_batch(const Corpus& corpus) {
    DenseMatrix data(corpus.count(), corpus.dim);
    for (int i = 0; i < corpus.count(); ++i) {
        const TokenRecord& rec = corpus.records[i];
        if (static_cast<int>(rec.embedding.size()) != corpus.dim)
            throw DimensionError("to_token_batch: record dim mismatch");
        for (int j = 0; j < corpus.dim; ++j) data.at(i, j) = rec.embedding[j];
    }
    return TokenBatch(1, corpus.count(), std::move(data));
}

DenseMatrix targets_matrix(const Corpus& corpus) {
    DenseMatrix t(corpus.count(), corpus.dim);
    for (int i = 0; i < corpus.count(); ++i) {
        const TokenRecord& rec = corpus.records[i];
        if (static_cast<int>(rec.target.size()) != corpus.dim)
            throw DimensionError("targets_matrix: record dim mismatch");
        for (int j = 0; j < corpus.dim; ++j) t.at(i, j) = rec.target[j];
    }
    return t;
}

std::vector<int> labels_of(const Corpus& corpus) {
    std::vector<int> labels(corpus.records.size());
    for (std::size_t i = 0; i < corpus.records.size(); ++i) labels[i] = corpus.records[i].role;
    return labels;
}

DenseMatrix label_mask_of(const Corpus& corpus) {
    DenseMatrix mask(corpus.count(), 1);
    for (int i = 0; i < corpus.count(); ++i)
        mask.at(i, 0) = corpus.records[i].role == kNoRole ? 0.0 : 1.0;
    return mask;
}

} // namespace moce
