#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "moce/grad_check.hpp"
#include "moce/kernels.hpp"
#include "moce/rng.hpp"
#include "moce/roles.hpp"
#include "moce/tape.hpp"

using namespace moce;

namespace {

TokenBatch random_batch(int b, int n, int d, std::uint64_t seed) {
    RngStream g(seed);
    return TokenBatch(b, n, random_gaussian(b * n, d, 1.0, g));
}

} // namespace

TEST_CASE("taxonomy is fixed, ordered, and versioned") {
    REQUIRE(kRoleCount == 9);
    CHECK(kTaxonomyVersion == 1);
    const char* expected[] = {"HEADER", "DATA", "AXIS",       "UNIT", "TOTAL",
                              "FORMULA", "ANNOTATION", "TEXT", "EMPTY"};
    for (int k = 0; k < kRoleCount; ++k) {
        CHECK(kRoleNames[k] == expected[k]);
        CHECK(role_name(k) == expected[k]);
        REQUIRE(role_index(kRoleNames[k]).has_value());
        CHECK(*role_index(kRoleNames[k]) == k);
    }
    CHECK(!role_index("BOGUS").has_value());
    CHECK(!role_index("data").has_value()); // names are case-sensitive
    CHECK_THROWS_AS(role_name(9), ValidationError);
    CHECK_THROWS_AS(role_name(-1), ValidationError);
    CHECK(static_cast<int>(Role::kData) == 1);
    CHECK(static_cast<int>(Role::kEmpty) == 8);
}

TEST_CASE("zero classifier predicts the uniform distribution") {
    RoleClassifierParams p;
    p.weight = DenseMatrix(4, kRoleCount);
    p.bias = DenseMatrix(1, kRoleCount);
    const TokenBatch x = random_batch(2, 3, 4, 11);
    const RoleDistribution dist = predict_roles(x, p);
    REQUIRE(dist.probs.rows == 6);
    REQUIRE(dist.probs.cols == 9);
    for (int i = 0; i < dist.probs.rows; ++i)
        for (int k = 0; k < 9; ++k)
            CHECK(std::fabs(dist.probs.at(i, k) - 1.0 / 9.0) < 1e-15);
}

TEST_CASE("large bias concentrates mass on HEADER") {
    RoleClassifierParams p;
    p.weight = DenseMatrix(3, kRoleCount);
    p.bias = DenseMatrix(1, kRoleCount);
    p.bias.at(0, 0) = 10.0;
    const TokenBatch x = random_batch(1, 5, 3, 12);
    const RoleDistribution dist = predict_roles(x, p);
    // softmax(10,0,...): head mass e^10/(e^10+8)
    const double expected = std::exp(10.0) / (std::exp(10.0) + 8.0);
    for (int i = 0; i < 5; ++i) {
        CHECK(dist.probs.at(i, 0) > 0.999);
        CHECK(std::fabs(dist.probs.at(i, 0) - expected) < 1e-12);
    }
}

TEST_CASE("weight row steers a single token to HEADER") {
    RoleClassifierParams p;
    p.weight = DenseMatrix(2, kRoleCount);
    p.bias = DenseMatrix(1, kRoleCount);
    p.weight.at(0, 0) = 5.0;
    DenseMatrix data(1, 2);
    data.at(0, 0) = 1.0;
    const TokenBatch x(1, 1, data);
    const RoleDistribution dist = predict_roles(x, p);
    CHECK(role_argmax(dist) == std::vector<int>{0});
    const double expected = std::exp(5.0) / (std::exp(5.0) + 8.0);
    CHECK(std::fabs(dist.probs.at(0, 0) - expected) < 1e-12);
}

TEST_CASE("predict_roles validates token dimension") {
    const RoleClassifierParams p = init_role_classifier(1, 4);
    CHECK_THROWS_AS(predict_roles(random_batch(1, 2, 5, 13), p), DimensionError);
}

TEST_CASE("predict_roles rows are valid distributions for random params") {
    RngStream g(14);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 1 + static_cast<int>(g.next_below(6));
        const RoleClassifierParams p = init_role_classifier(g.next_u64(), d);
        const TokenBatch x = random_batch(2, 4, d, g.next_u64());
        const RoleDistribution dist = predict_roles(x, p);
        for (int i = 0; i < dist.probs.rows; ++i) {
            double sum = 0.0;
            for (int k = 0; k < 9; ++k) {
                const double v = dist.probs.at(i, k);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("init_role_classifier is deterministic with zero bias") {
    const RoleClassifierParams a = init_role_classifier(42, 8);
    const RoleClassifierParams b = init_role_classifier(42, 8);
    CHECK(bitwise_equal(a.weight, b.weight));
    CHECK(a.weight.rows == 8);
    CHECK(a.weight.cols == 9);
    for (double v : a.bias.data) CHECK(v == 0.0);
    const RoleClassifierParams c = init_role_classifier(43, 8);
    CHECK(!bitwise_equal(a.weight, c.weight));
}

TEST_CASE("role_loss matches hand-computed cross-entropy") {
    RoleDistribution dist;
    dist.batch = 1;
    dist.tokens = 2;
    dist.probs = DenseMatrix(2, 9);
    for (int k = 0; k < 9; ++k) {
        dist.probs.at(0, k) = 1.0 / 9.0;
        dist.probs.at(1, k) = k == 3 ? 1.0 : 0.0;
    }
    const std::vector<int> labels{4, 3};
    const std::vector<std::uint8_t> all{1, 1};
    const std::vector<std::uint8_t> none{0, 0};
    const std::vector<std::uint8_t> first{1, 0};

    // uniform token: -ln(1/9); one-hot-correct token: -ln(1) = 0
    CHECK(role_loss(dist, labels, first) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(role_loss(dist, labels, all) == doctest::Approx(std::log(9.0) / 2.0).epsilon(1e-12));
    CHECK(role_loss(dist, labels, none) == 0.0);

    const std::vector<std::uint8_t> second{0, 1};
    CHECK(role_loss(dist, labels, second) <= 1e-9);

    const std::vector<int> bad{4, 9};
    CHECK_THROWS_AS(role_loss(dist, bad, all), ValidationError);
    const std::vector<int> short_labels{4};
    const std::vector<std::uint8_t> short_mask{1};
    CHECK_THROWS_AS(role_loss(dist, short_labels, all), DimensionError);
    CHECK_THROWS_AS(role_loss(dist, labels, short_mask), DimensionError);
}

TEST_CASE("quarter-probability label costs ln 4") {
    RoleDistribution dist;
    dist.batch = 1;
    dist.tokens = 1;
    dist.probs = DenseMatrix(1, 9);
    dist.probs.at(0, 2) = 0.25;
    dist.probs.at(0, 0) = 0.75;
    const std::vector<int> labels{2};
    const std::vector<std::uint8_t> mask{1};
    CHECK(role_loss(dist, labels, mask) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("role_argmax tie-breaks toward the lowest taxonomy index") {
    RoleDistribution dist;
    dist.batch = 1;
    dist.tokens = 3;
    dist.probs = DenseMatrix(3, 9);
    for (int k = 0; k < 9; ++k) dist.probs.at(0, k) = 1.0 / 9.0;
    dist.probs.at(1, 1) = 0.8;
    dist.probs.at(1, 0) = 0.2;
    dist.probs.at(2, 3) = 0.4;
    dist.probs.at(2, 5) = 0.4;
    dist.probs.at(2, 0) = 0.2;
    CHECK(role_argmax(dist) == std::vector<int>{0, 1, 3});
}

TEST_CASE("argmax is invariant under monotone logit rescaling") {
    RngStream g(15);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> logits(9);
        for (double& v : logits) v = -2.0 + 4.0 * g.next_uniform();
        const double c = 0.1 + 5.0 * g.next_uniform();
        std::vector<double> scaled(9);
        for (int k = 0; k < 9; ++k) scaled[k] = c * logits[k];
        const ProbVector p = softmax(logits);
        const ProbVector q = softmax(scaled);
        CHECK(argmax_row(p.p) == argmax_row(q.p));
    }
}

TEST_CASE("role_loss gradient w.r.t. classifier parameters matches finite differences") {
    RngStream g(16);
    DenseMatrix w = random_gaussian(4, 9, 0.5, g);
    DenseMatrix bias = random_gaussian(1, 9, 0.5, g);
    const DenseMatrix x = random_gaussian(6, 4, 1.0, g);
    const std::vector<int> labels{0, 4, 8, 2, 2, 7};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};

    GradTape tape;
    const int wi = tape.leaf(w);
    const int bi = tape.leaf(bias);
    const int probs = tape.softmax_rows(tape.add_row(tape.matmul(tape.leaf(x), wi), bi));
    const int loss = tape.masked_nll(probs, labels, mask);
    tape.backward(loss);
    const DenseMatrix gw = tape.grad(wi);
    const DenseMatrix gb = tape.grad(bi);

    auto loss_fn = [&]() {
        GradTape t;
        const int p = t.softmax_rows(t.add_row(t.matmul(t.leaf(x), t.leaf(w)), t.leaf(bias)));
        return t.scalar_value(t.masked_nll(p, labels, mask));
    };
    const GradCheckReport rep = finite_diff_check(
        loss_fn, {NamedParam{"w_role", &w}, NamedParam{"b_role", &bias}}, {&gw, &gb}, 1e-5);
    CHECK(rep.max_rel_error < 1e-4);

    // the same tape loss agrees with the module-level role_loss
    RoleDistribution dist;
    dist.batch = 1;
    dist.tokens = 6;
    dist.probs = softmax_rows(add_row_broadcast(matmul(x, w), bias));
    CHECK(role_loss(dist, labels, mask) ==
          doctest::Approx(tape.scalar_value(loss)).epsilon(1e-12));
}
