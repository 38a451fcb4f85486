#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "moce/data_synth.hpp"
#include "moce/kernels.hpp"
#include "moce/roles.hpp"
#include "moce/tape.hpp"

using namespace moce;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("moce_ds_" + name)).string();
}

Corpus tiny_corpus() {
    Corpus c;
    c.dim = 2;
    TokenRecord a;
    a.id = 0;
    a.embedding = {1.0, -2.0};
    a.role = kHeader;
    a.target = {0.5, 0.25};
    a.severity = 0.0;
    TokenRecord b;
    b.id = 1;
    b.embedding = {3.0, 4.0};
    b.role = kNoRole;
    b.target = {-1.0, 1.0};
    b.severity = 0.5;
    c.records = {a, b};
    return c;
}

} // namespace

TEST_CASE("default spec skews the prior and carries one map per role") {
    const CorpusSpec spec = default_corpus_spec(8, 100, 1);
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.dim == 8);
    CHECK(spec.cluster_separation == 4.0);
    REQUIRE(spec.role_prior.dim() == 9);
    CHECK(spec.role_prior.p[kData] == 0.30);
    CHECK(spec.role_prior.p[kUnit] == 0.20);
    for (int k = 0; k < 9; ++k)
        if (k != kData && k != kUnit) CHECK(spec.role_prior.p[k] == doctest::Approx(0.5 / 7.0));
    REQUIRE(spec.target_maps.size() == 9);
    for (const DenseMatrix& m : spec.target_maps) {
        CHECK(m.rows == 8);
        CHECK(m.cols == 8);
        CHECK(m.all_finite());
    }
    CHECK(!bitwise_equal(spec.target_maps[0], spec.target_maps[1]));
    CHECK_THROWS_AS(default_corpus_spec(3, 100, 1), ValidationError);
}

TEST_CASE("spec validation rejects malformed inputs") {
    CorpusSpec spec = default_corpus_spec(4, 10, 1);
    spec.token_count = -1;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = default_corpus_spec(4, 10, 1);
    spec.cluster_separation = 0.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = default_corpus_spec(4, 10, 1);
    spec.target_maps.pop_back();
    CHECK_THROWS_AS(spec.validate(), DimensionError);
    spec = default_corpus_spec(4, 10, 1);
    spec.target_maps[3] = DenseMatrix(4, 5);
    CHECK_THROWS_AS(spec.validate(), DimensionError);
    spec = default_corpus_spec(4, 10, 1);
    spec.role_prior.p[0] += 0.5;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("cluster means are sign patterns scaled by the separation") {
    const std::vector<double> origin = role_cluster_mean(0, 5, 4.0);
    for (double v : origin) CHECK(v == 4.0);
    const std::vector<double> r8 = role_cluster_mean(8, 5, 4.0);
    CHECK(r8[0] == 4.0);
    CHECK(r8[3] == -4.0);
    CHECK(r8[4] == 4.0);

    std::set<std::vector<double>> patterns;
    for (int role = 0; role < 9; ++role) patterns.insert(role_cluster_mean(role, 4, 4.0));
    CHECK(patterns.size() == 9); // all roles separable at dim >= 4

    const std::vector<double> base = role_cluster_mean(5, 6, 2.0);
    const std::vector<double> doubled = role_cluster_mean(5, 6, 4.0);
    for (std::size_t j = 0; j < base.size(); ++j) CHECK(doubled[j] == 2.0 * base[j]);
}

TEST_CASE("gen_corpus is deterministic and honors token_count") {
    CorpusSpec spec = default_corpus_spec(4, 0, 9);
    CHECK(gen_corpus(spec).records.empty());
    spec.token_count = 64;
    const Corpus a = gen_corpus(spec);
    const Corpus b = gen_corpus(spec);
    REQUIRE(a.count() == 64);
    CHECK(bitwise_equal(a, b));
    spec.seed = 10;
    CHECK(!bitwise_equal(a, gen_corpus(spec)));
    for (int i = 0; i < a.count(); ++i) CHECK(a.records[i].id == i);
}

TEST_CASE("uniform prior yields balanced role counts") {
    CorpusSpec spec = default_corpus_spec(8, 9000, 7);
    spec.role_prior = ProbVector{std::vector<double>(9, 1.0 / 9.0)};
    const Corpus c = gen_corpus(spec);
    std::vector<int> counts(9, 0);
    for (const TokenRecord& rec : c.records) {
        REQUIRE(rec.role >= 0);
        REQUIRE(rec.role < 9);
        ++counts[rec.role];
    }
    // 3 sigma around 9000/9 under the multinomial: sqrt(9000*(1/9)(8/9)) ~ 29.8
    for (int k = 0; k < 9; ++k) {
        CHECK(counts[k] > 1000 - 90);
        CHECK(counts[k] < 1000 + 90);
    }
}

TEST_CASE("default prior skew shows up in drawn role counts") {
    const CorpusSpec spec = default_corpus_spec(8, 9000, 8);
    const Corpus c = gen_corpus(spec);
    std::vector<int> counts(9, 0);
    for (const TokenRecord& rec : c.records) ++counts[rec.role];
    int other_max = 0;
    for (int k = 0; k < 9; ++k)
        if (k != kData && k != kUnit) other_max = std::max(other_max, counts[k]);
    CHECK(counts[kData] > counts[kUnit]);
    CHECK(counts[kUnit] > other_max);
}

TEST_CASE("targets are the role map applied to the noisy embedding") {
    const CorpusSpec spec = default_corpus_spec(4, 50, 3);
    const Corpus c = gen_corpus(spec);
    for (const TokenRecord& rec : c.records) {
        const DenseMatrix& map = spec.target_maps[rec.role];
        for (int r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (int col = 0; col < 4; ++col) acc += map.at(r, col) * rec.embedding[col];
            CHECK(rec.target[r] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("embeddings scatter around their role cluster mean") {
    const CorpusSpec spec = default_corpus_spec(8, 4000, 12);
    const Corpus c = gen_corpus(spec);
    std::vector<std::vector<double>> sums(9, std::vector<double>(8, 0.0));
    std::vector<int> counts(9, 0);
    for (const TokenRecord& rec : c.records) {
        ++counts[rec.role];
        for (int j = 0; j < 8; ++j) sums[rec.role][j] += rec.embedding[j];
    }
    for (int role = 0; role < 9; ++role) {
        REQUIRE(counts[role] > 50);
        const std::vector<double> mean = role_cluster_mean(role, 8, 4.0);
        for (int j = 0; j < 8; ++j) {
            const double emp = sums[role][j] / counts[role];
            CHECK(std::fabs(emp - mean[j]) < 0.5); // unit noise, n >= 50 per role
        }
    }
}

TEST_CASE("severity mapping scales all four rates from zero") {
    const DegradationConfig zero = degradation_for_severity(0.0);
    CHECK(zero.is_identity());
    const DegradationConfig full = degradation_for_severity(1.0);
    CHECK(full.label_mask_rate == 0.6);
    CHECK(full.embedding_noise_sigma == 0.5);
    CHECK(full.token_dropout_rate == 0.05);
    CHECK(full.role_label_flip_rate == 0.1);
    const DegradationConfig half = degradation_for_severity(0.5);
    CHECK(half.label_mask_rate == doctest::Approx(0.3).epsilon(1e-15));
    CHECK_THROWS_AS(degradation_for_severity(-0.1), ValidationError);
    CHECK_THROWS_AS(degradation_for_severity(1.1), ValidationError);

    DegradationConfig bad;
    bad.embedding_noise_sigma = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = DegradationConfig{};
    bad.token_dropout_rate = 2.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("identity degradation returns the corpus unchanged") {
    const Corpus c = gen_corpus(default_corpus_spec(4, 32, 5));
    const Corpus out = degrade(c, DegradationConfig{}, 999);
    CHECK(bitwise_equal(c, out));
}

TEST_CASE("full dropout empties the corpus") {
    const Corpus c = gen_corpus(default_corpus_spec(4, 32, 5));
    DegradationConfig cfg;
    cfg.token_dropout_rate = 1.0;
    const Corpus out = degrade(c, cfg, 1);
    CHECK(out.records.empty());
    CHECK(out.dim == 4);
}

TEST_CASE("full mask removes every label, full flip changes every label") {
    const Corpus c = gen_corpus(default_corpus_spec(4, 64, 6));
    DegradationConfig mask_cfg;
    mask_cfg.label_mask_rate = 1.0;
    for (const TokenRecord& rec : degrade(c, mask_cfg, 2).records) CHECK(rec.role == kNoRole);

    DegradationConfig flip_cfg;
    flip_cfg.role_label_flip_rate = 1.0;
    const Corpus flipped = degrade(c, flip_cfg, 3);
    REQUIRE(flipped.count() == c.count());
    for (int i = 0; i < c.count(); ++i) {
        CHECK(flipped.records[i].role != c.records[i].role);
        CHECK(flipped.records[i].role >= 0);
        CHECK(flipped.records[i].role < 9);
    }
}

TEST_CASE("noise perturbation energy matches the chi-square expectation") {
    const int dim = 8;
    const Corpus c = gen_corpus(default_corpus_spec(dim, 10000, 13));
    DegradationConfig cfg;
    cfg.embedding_noise_sigma = 0.5;
    const Corpus noisy = degrade(c, cfg, 14);
    REQUIRE(noisy.count() == c.count());
    double acc = 0.0;
    for (int i = 0; i < c.count(); ++i) {
        for (int j = 0; j < dim; ++j) {
            const double d = noisy.records[i].embedding[j] - c.records[i].embedding[j];
            acc += d * d;
        }
        // labels and targets are untouched by pure noise
        CHECK(noisy.records[i].role == c.records[i].role);
    }
    const double mean_sq = acc / c.count();
    const double expected = dim * 0.25;
    CHECK(std::fabs(mean_sq - expected) < 0.05 * expected);
}

TEST_CASE("degradation outcomes depend on record id, not corpus order") {
    const Corpus c = gen_corpus(default_corpus_spec(4, 200, 15));
    Corpus reversed;
    reversed.dim = c.dim;
    reversed.records.assign(c.records.rbegin(), c.records.rend());

    DegradationConfig cfg = degradation_for_severity(0.7);
    const Corpus a = degrade(c, cfg, 77);
    const Corpus b = degrade(reversed, cfg, 77);
    REQUIRE(a.count() == b.count());

    auto by_id = [](const Corpus& corpus) {
        std::vector<const TokenRecord*> out(corpus.records.size());
        for (std::size_t i = 0; i < corpus.records.size(); ++i) out[i] = &corpus.records[i];
        std::sort(out.begin(), out.end(),
                  [](const TokenRecord* x, const TokenRecord* y) { return x->id < y->id; });
        return out;
    };
    const auto ida = by_id(a);
    const auto idb = by_id(b);
    for (std::size_t i = 0; i < ida.size(); ++i) CHECK(bitwise_equal(*ida[i], *idb[i]));
}

TEST_CASE("degrade_at_severity stamps survivors") {
    const Corpus c = gen_corpus(default_corpus_spec(4, 100, 16));
    const Corpus out = degrade_at_severity(c, 0.5, 4);
    CHECK(out.count() > 80); // dropout rate is only 0.025 at severity 0.5
    for (const TokenRecord& rec : out.records) CHECK(rec.severity == 0.5);
}

TEST_CASE("corpus round-trip is bit-exact, including edge-case floats") {
    Corpus c;
    c.dim = 4;
    TokenRecord a;
    a.id = (std::int64_t{1} << 53) + 1;
    a.embedding = {-0.0, 1e-308, -1e308, 0.1 + 0.2};
    a.role = kFormula;
    a.target = {3.141592653589793, -2.2250738585072014e-308, 0.0, 42.0};
    a.severity = 0.25;
    TokenRecord b;
    b.id = -7;
    b.embedding = {1.0, 2.0, 3.0, 4.0};
    b.role = kNoRole; // serialized without a role field
    b.target = {0.0, 0.0, 0.0, 0.0};
    b.severity = 1.0;
    c.records = {a, b};

    const std::string path = temp_path("roundtrip.jsonl");
    write_corpus(c, path);
    const Corpus back = read_corpus(path);
    CHECK(bitwise_equal(c, back));
    CHECK(back.records[1].role == kNoRole);
    std::filesystem::remove(path);
}

TEST_CASE("generated corpora round-trip through the file format") {
    const Corpus c = gen_corpus(default_corpus_spec(8, 500, 17));
    const std::string path = temp_path("gen_roundtrip.jsonl");
    write_corpus(c, path);
    CHECK(bitwise_equal(c, read_corpus(path)));
    std::filesystem::remove(path);
}

TEST_CASE("read_corpus reports precise failure lines") {
    const std::string path = temp_path("bad.jsonl");

    std::ofstream(path) << "";
    const Corpus empty = read_corpus(path);
    CHECK(empty.records.empty());
    CHECK(empty.dim == 0);

    std::ofstream(path) << "not a header\n";
    try {
        read_corpus(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }

    std::ofstream(path) << "#moce-corpus v1 D=2\n{broken\n";
    try {
        read_corpus(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::ofstream(path) << "#moce-corpus v1 D=2\n"
                        << R"({"id":0,"embedding":[1,2],"role":"BOGUS","target":[0,0],"severity":0})"
                        << "\n";
    try {
        read_corpus(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("BOGUS") != std::string::npos);
        CHECK(what.find("line 2") != std::string::npos);
    }

    std::ofstream(path) << "#moce-corpus v1 D=2\n"
                        << R"({"id":0,"embedding":[1,2,3],"target":[0,0],"severity":0})"
                        << "\n";
    CHECK_THROWS_AS(read_corpus(path), ValidationError);

    std::ofstream(path) << "#moce-corpus v1 D=2\n"
                        << R"({"id":0,"embedding":[1,2],"target":[0,0],"severity":7})"
                        << "\n";
    CHECK_THROWS_AS(read_corpus(path), ValidationError);

    CHECK_THROWS_AS(read_corpus(temp_path("definitely_missing.jsonl")), Error);
    std::filesystem::remove(path);
}

TEST_CASE("flattened views line up with the records") {
    const Corpus c = tiny_corpus();
    const TokenBatch x = to_token_batch(c);
    CHECK(x.batch == 1);
    CHECK(x.tokens == 2);
    CHECK(x.data.at(0, 1) == -2.0);
    CHECK(x.data.at(1, 0) == 3.0);
    const DenseMatrix t = targets_matrix(c);
    CHECK(t.at(0, 0) == 0.5);
    CHECK(t.at(1, 1) == 1.0);
    CHECK(labels_of(c) == std::vector<int>{kHeader, kNoRole});
    const DenseMatrix mask = label_mask_of(c);
    CHECK(mask.at(0, 0) == 1.0);
    CHECK(mask.at(1, 0) == 0.0);
}

TEST_CASE("a fitted linear classifier separates the clean clusters") {
    const Corpus c = gen_corpus(default_corpus_spec(8, 2000, 11));
    const TokenBatch x = to_token_batch(c);
    const std::vector<int> labels = labels_of(c);
    const std::vector<std::uint8_t> mask(labels.size(), 1);

    DenseMatrix w = init_role_classifier(11, 8).weight;
    DenseMatrix bias(1, 9);
    for (int step = 0; step < 150; ++step) {
        GradTape tape;
        const int wi = tape.leaf(w);
        const int bi = tape.leaf(bias);
        const int probs = tape.softmax_rows(tape.add_row(tape.matmul(tape.leaf(x.data), wi), bi));
        tape.backward(tape.masked_nll(probs, labels, mask));
        const DenseMatrix& gw = tape.grad(wi);
        const DenseMatrix& gb = tape.grad(bi);
        for (std::size_t k = 0; k < w.data.size(); ++k) w.data[k] -= 0.1 * gw.data[k];
        for (std::size_t k = 0; k < bias.data.size(); ++k) bias.data[k] -= 0.1 * gb.data[k];
    }
    RoleClassifierParams fitted;
    fitted.weight = w;
    fitted.bias = bias;
    const std::vector<int> pred = role_argmax(predict_roles(x, fitted));
    int hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    CHECK(static_cast<double>(hits) / labels.size() >= 0.99);
}
