#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fedprune/pruning.hpp"
#include "test_util.hpp"

using namespace fedprune;

namespace {

/// Dense-only model over `n_in` inputs with 2 output classes; every weight is
/// individually settable for hand-computed oracles.
ModelParams linear_model(int n_in, const std::vector<double>& w_row0,
                         const std::vector<double>& w_row1) {
    Architecture a;
    a.input_length = n_in;
    a.classes = 2;
    a.layers = {LayerSpec::flatten(), LayerSpec::dense(n_in, 2)};
    ModelParams m = build_model(a, 0);
    for (int i = 0; i < n_in; ++i) {
        m.weights[0].at2(0, static_cast<std::size_t>(i)) = w_row0[static_cast<std::size_t>(i)];
        m.weights[0].at2(1, static_cast<std::size_t>(i)) = w_row1[static_cast<std::size_t>(i)];
    }
    m.biases[0].fill(0.0);
    return m;
}

ModelParams small_conv_model(std::uint64_t seed) {
    Architecture a;
    a.input_length = 10;
    a.classes = 3;
    a.layers = {LayerSpec::conv1d(1, 3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                LayerSpec::dense(0, 3)};
    return build_model(a, seed);
}

}  // namespace

TEST_CASE("importance_exact: zero weights score zero and the model is restored") {
    ModelParams m = small_conv_model(3);
    m.set_weight(5, 0.0);
    const ModelParams before = m;
    Dataset ds = generate_synthetic(3, 10, {8, 8, 8}, 2.0, 9);
    const ImportanceVector iv = importance_exact(m, ds);
    REQUIRE(iv.scores[5] == 0.0);
    for (std::size_t p = 0; p < m.weights.size(); ++p) {
        REQUIRE(m.weights[p] == before.weights[p]);
        REQUIRE(m.biases[p] == before.biases[p]);
    }
}

TEST_CASE("importance_exact: matches hand-computed loss differences on a linear model") {
    // 2 weights active: w[0][0] and w[1][1]; 2 features, 4 points.
    ModelParams m = linear_model(2, {0.8, 0.0}, {0.0, -0.6});
    Dataset ds;
    ds.features = Tensor({4, 2});
    ds.features.values = {1.0, 0.0, 0.0, 1.0, 0.5, 0.5, -1.0, 0.3};
    ds.labels = {0, 1, 0, 1};
    ds.class_names = {"a", "b"};

    ModelParams probe = m;
    const ImportanceVector iv = importance_exact(probe, ds);

    const double base = testutil::naive_loss(m, ds.features, ds.labels);
    for (std::size_t j = 0; j < m.weight_count(); ++j) {
        ModelParams zeroed = m;
        zeroed.set_weight(j, 0.0);
        const double without = testutil::naive_loss(zeroed, ds.features, ds.labels);
        const double expected = (base - without) * (base - without);
        REQUIRE(iv.scores[j] == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("importance_l1: absolute values in global index order") {
    const ModelParams m = linear_model(2, {0.5, -0.2}, {0.1, -0.9});
    const ImportanceVector iv = importance_l1(m);
    REQUIRE(iv.scores == std::vector<double>{0.5, 0.2, 0.1, 0.9});
}

TEST_CASE("importance_l1: all-zero model scores zero everywhere") {
    ModelParams m = small_conv_model(4);
    for (Tensor& w : m.weights) w.fill(0.0);
    const ImportanceVector iv = importance_l1(m);
    for (double s : iv.scores) REQUIRE(s == 0.0);
}

TEST_CASE("importance_l1: score order equals an independent sort of |w|") {
    const ModelParams m = small_conv_model(5);
    const ImportanceVector iv = importance_l1(m);
    std::vector<std::size_t> by_score(iv.scores.size());
    std::iota(by_score.begin(), by_score.end(), 0);
    std::stable_sort(by_score.begin(), by_score.end(),
                     [&](std::size_t a, std::size_t b) { return iv.scores[a] < iv.scores[b]; });
    std::vector<std::size_t> by_weight(iv.scores.size());
    std::iota(by_weight.begin(), by_weight.end(), 0);
    std::stable_sort(by_weight.begin(), by_weight.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(m.get_weight(a)) < std::fabs(m.get_weight(b));
    });
    REQUIRE(by_score == by_weight);
}

TEST_CASE("build_mask: rho = 0 keeps everything") {
    const ModelParams m = small_conv_model(6);
    const PruneMask mask = build_mask(importance_l1(m), 0.0, m);
    REQUIRE(mask.kept_count == m.weight_count());
    for (const Tensor& b : mask.bits)
        for (double v : b.values) REQUIRE(v == 1.0);
}

TEST_CASE("build_mask: known scores at rho = 0.5") {
    const ModelParams m = linear_model(2, {0.5, -0.2}, {0.1, -0.9});
    ImportanceVector iv;
    iv.scores = {0.5, 0.2, 0.1, 0.9};
    const PruneMask mask = build_mask(iv, 0.5, m);
    REQUIRE(mask.kept_count == 2);
    REQUIRE(mask.bits[0].values == std::vector<double>{1.0, 0.0, 0.0, 1.0});
}

TEST_CASE("build_mask: equal scores prune the highest global indices") {
    // NP = 8 via a 4-in 2-out dense layer; rho = 0.25 prunes 2 weights.
    const ModelParams m = linear_model(4, {1, 1, 1, 1}, {1, 1, 1, 1});
    ImportanceVector iv;
    iv.scores.assign(8, 0.7);
    const PruneMask mask = build_mask(iv, 0.25, m);
    std::vector<std::size_t> pruned;
    for (std::size_t j = 0; j < 8; ++j) {
        auto [p, off] = m.locate(j);
        if (mask.bits[p][off] == 0.0) pruned.push_back(j);
    }
    REQUIRE(pruned == std::vector<std::size_t>{6, 7});
}

TEST_CASE("build_mask: rho outside [0, 1) is a configuration error") {
    const ModelParams m = small_conv_model(6);
    const ImportanceVector iv = importance_l1(m);
    REQUIRE_THROWS_AS(build_mask(iv, 1.0, m), ConfigError);
    REQUIRE_THROWS_AS(build_mask(iv, -0.1, m), ConfigError);
}

TEST_CASE("build_mask: kept set ignores layer boundaries (global ranking)") {
    // Two models with identical global score multisets but different layer
    // shapes must prune the same global index set.
    const ModelParams a = linear_model(4, {0.1, 0.8, 0.3, 0.6}, {0.2, 0.7, 0.4, 0.5});
    Architecture arch_b;
    arch_b.input_length = 2;
    arch_b.classes = 2;
    arch_b.layers = {LayerSpec::flatten(), LayerSpec::dense(2, 2), LayerSpec::dense(2, 2)};
    ModelParams b = build_model(arch_b, 0);
    const std::vector<double> scores{0.1, 0.8, 0.3, 0.6, 0.2, 0.7, 0.4, 0.5};
    ImportanceVector iv;
    iv.scores = scores;
    const PruneMask mask_a = build_mask(iv, 0.5, a);
    const PruneMask mask_b = build_mask(iv, 0.5, b);
    auto pruned_set = [&scores](const ModelParams& m, const PruneMask& mask) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < 8; ++j) {
            auto [p, off] = m.locate(j);
            if (mask.bits[p][off] == 0.0) out.push_back(j);
        }
        return out;
    };
    REQUIRE(pruned_set(a, mask_a) == pruned_set(b, mask_b));
}

TEST_CASE("apply_mask: all-ones is the identity, application is idempotent") {
    ModelParams m = small_conv_model(7);
    const ModelParams before = m;
    apply_mask(m, PruneMask::all_ones(m));
    for (std::size_t p = 0; p < m.weights.size(); ++p) REQUIRE(m.weights[p] == before.weights[p]);

    const PruneMask mask = build_mask(importance_l1(m), 0.4, m);
    apply_mask(m, mask);
    const ModelParams once = m;
    apply_mask(m, mask);
    for (std::size_t p = 0; p < m.weights.size(); ++p) {
        REQUIRE(m.weights[p] == once.weights[p]);
        REQUIRE(m.biases[p] == before.biases[p]);  // biases never touched
    }
}

TEST_CASE("apply_mask: kept_count equals surviving nonzeros") {
    ModelParams m = small_conv_model(8);
    const PruneMask mask = build_mask(importance_l1(m), 0.3, m);
    apply_mask(m, mask);
    std::size_t nonzero = 0;
    for (const Tensor& w : m.weights)
        for (double v : w.values)
            if (v != 0.0) ++nonzero;
    REQUIRE(nonzero == mask.kept_count);  // He-normal draws are never exactly 0
}

TEST_CASE("remaining_weights: floor arithmetic") {
    const ModelParams m = linear_model(4, {1, 1, 1, 1}, {1, 1, 1, 1});
    ImportanceVector iv;
    iv.scores.assign(8, 1.0);
    REQUIRE(remaining_weights(build_mask(iv, 0.0, m)) == 8);

    // NP = 190218 at rho = 0.5 -> 95109. Checked without building the giant
    // model: floor semantics on the published parameter count.
    const std::size_t np = 190218;
    const std::size_t pruned_count = static_cast<std::size_t>(0.5 * static_cast<double>(np));
    REQUIRE(np - pruned_count == 95109);

    // NP = 10 at rho = 0.33 keeps 7.
    const ModelParams m10 = linear_model(5, {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1});
    ImportanceVector iv10;
    iv10.scores.assign(10, 1.0);
    REQUIRE(remaining_weights(build_mask(iv10, 0.33, m10)) == 7);
}

TEST_CASE("exact and L1 importance agree on top-k sets for a unit-scale linear model") {
    // With unit inputs and a symmetric objective, the squared loss change is
    // monotone in |w|, so both rankings select the same keep set.
    const ModelParams m = linear_model(3, {0.9, -0.1, 0.4}, {-0.7, 0.2, -0.5});
    Dataset ds;
    ds.features = Tensor({2, 3}, 1.0);  // unit-scale inputs
    ds.labels = {0, 1};
    ds.class_names = {"a", "b"};
    ModelParams probe = m;
    const ImportanceVector exact = importance_exact(probe, ds);
    const ImportanceVector l1 = importance_l1(m);
    auto top_half = [](const std::vector<double>& scores) {
        std::vector<std::size_t> idx(scores.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return a < b;
        });
        idx.resize(scores.size() / 2);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    REQUIRE(top_half(exact.scores) == top_half(l1.scores));
}

TEST_CASE("mask blob round-trips through the wire format") {
    ModelParams m = small_conv_model(10);
    const PruneMask mask = build_mask(importance_l1(m), 0.37, m);
    const auto blob = serialize_mask(mask);
    const PruneMask back = deserialize_mask(blob, m);
    REQUIRE(back.rho == mask.rho);
    REQUIRE(back.kept_count == mask.kept_count);
    for (std::size_t p = 0; p < mask.bits.size(); ++p) REQUIRE(back.bits[p] == mask.bits[p]);

    auto corrupted = blob;
    corrupted.resize(10);
    REQUIRE_THROWS_AS(deserialize_mask(corrupted, m), InputError);
}
