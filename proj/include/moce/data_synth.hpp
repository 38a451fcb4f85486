#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moce/batch.hpp"
#include "moce/matrix.hpp"
#include "moce/rng.hpp"

namespace moce {

inline constexpr int kNoRole = -1;

struct TokenRecord {
    std::int64_t id = 0;
    std::vector<double> embedding;
    int role = kNoRole; // index into kRoleNames; kNoRole when the label is absent
    std::vector<double> target;
    double severity = 0.0;
};

struct Corpus {
    int dim = 0;
    std::vector<TokenRecord> records;

    int count() const { return static_cast<int>(records.size()); }
};

// Bit-level equality (doubles compared by bit pattern, so -0.0 != +0.0 and
// every serialization round-trip can be checked exactly).
bool bitwise_equal(const TokenRecord& a, const TokenRecord& b);
bool bitwise_equal(const Corpus& a, const Corpus& b);

struct CorpusSpec {
    int token_count = 0;
    int dim = 0;
    ProbVector role_prior;                 // over the 9 roles
    double cluster_separation = 4.0;       // must be > 0
    std::vector<DenseMatrix> target_maps;  // one D x D map per role
    std::uint64_t seed = 0;

    void validate() const;
};

// Skewed-toward-DATA/UNIT prior, signed-axis cluster means, and per-role
// random linear target maps. Role clusters are distinct for dim >= 4.
CorpusSpec default_corpus_spec(int dim, int token_count, std::uint64_t seed);

// Cluster mean for one role: cluster_separation * sign pattern derived from
// the role's binary code, one sign per coordinate.
std::vector<double> role_cluster_mean(int role, int dim, double separation);

// Roles drawn from role_prior, embedding = cluster mean + unit Gaussian noise,
// target = target_maps[role] * embedding. Pure function of its argument.
Corpus gen_corpus(const CorpusSpec& spec);

struct DegradationConfig {
    double label_mask_rate = 0.0;
    double embedding_noise_sigma = 0.0;
    double token_dropout_rate = 0.0;
    double role_label_flip_rate = 0.0;

    void validate() const;
    bool is_identity() const;
};

// Severity knob in [0,1] mapped onto concrete rates. The constants are the
// single place the curriculum's "how corrupted is stage s" question is
// answered.
DegradationConfig degradation_for_severity(double severity);

// Independently per token: drop, add embedding noise, mask the label, flip
// the label to a uniformly random other role. Each token consumes only its
// own id-derived stream, so per-token outcomes are independent of corpus
// order and of other tokens' fates. Severity stamps are left untouched.
Corpus degrade(const Corpus& corpus, const DegradationConfig& cfg, std::uint64_t seed);

// degrade() with rates from degradation_for_severity; stamps each surviving
// record with the severity.
Corpus degrade_at_severity(const Corpus& corpus, double severity, std::uint64_t seed);

// Line-delimited file with a "#moce-corpus v1 D=<D>" header. Floats carry
// full round-trip precision, so read(write(c)) is bit-exact.
void write_corpus(const Corpus& corpus, const std::string& path);
Corpus read_corpus(const std::string& path);

// Flattened views for the learning stack.
TokenBatch to_token_batch(const Corpus& corpus);       // batch=1, tokens=count
DenseMatrix targets_matrix(const Corpus& corpus);      // count x D
std::vector<int> labels_of(const Corpus& corpus);      // kNoRole where masked
DenseMatrix label_mask_of(const Corpus& corpus);       // count x 1, 1 = labeled

} // namespace moce
