#include <doctest.h>

#include <cmath>

#include "svae/errors.hpp"
#include "svae/invariance.hpp"
#include "svae/training.hpp"

using namespace svae;

namespace {

TrainConfig toy_config() {
    TrainConfig c;
    c.beta = 0.9;
    c.alpha = 50.0;
    c.batch_size = 32;
    c.epochs = 30;
    c.seed = 7;
    c.split = {4, 3};
    c.architecture.encoder_hidden = {64, 32};
    c.architecture.classifier_hidden = {16};
    return c;
}

const SvaeModel& toy_model() {
    static const SvaeModel m = [] {
        const Dataset train_set = synth_toy_dataset(11, 400);
        return train(toy_config(), train_set, synth_toy_dataset(12, 20)).svae();
    }();
    return m;
}

SvaeModel random_model(std::uint64_t seed) {
    ArchitectureOptions o;
    o.encoder_hidden = {16, 8};
    o.classifier_hidden = {8};
    return SvaeModel::create(64, 4, {3, 2}, o, seed, false);
}

}  // namespace

TEST_CASE("tiny sigma reproduces the z2 = 0 reconstruction check") {
    const SvaeModel m = random_model(3);
    const Dataset d = synth_toy_dataset(5, 10);
    const std::vector<double> grid{1e-8};
    const RetentionCurve c = invariance_test(m, d, grid, 1, 9, 8);
    CHECK(c.retention[0] == reconstruction_consistency(m, d, 9, 8));
}

TEST_CASE("a decoder blind to z2 gives a flat curve") {
    SvaeModel m = random_model(4);
    Tensor& w = m.params.at("dec.0.weight");
    for (std::size_t r = m.split.d1; r < m.split.total(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) = 0.0;
    const Dataset d = synth_toy_dataset(6, 5);
    const RetentionCurve c = invariance_test(m, d, default_sigma_grid(), 3, 1, 8);
    REQUIRE(c.retention.size() == 5);
    for (std::size_t k = 1; k < 5; ++k) {
        CHECK(c.retention[k] == c.retention[0]);
        CHECK(c.mean_l2[k] == doctest::Approx(c.mean_l2[0]).epsilon(1e-12));
    }
}

TEST_CASE("generated images keep z1 and vary only with z2") {
    const SvaeModel m = random_model(5);
    const Dataset d = synth_toy_dataset(6, 2);
    const auto x = d.image(0);
    Rng rng(1);
    const InvariantSample s = generate_invariant(m, x, 1.0, rng);
    CHECK(s.z2_used.size() == m.split.d2);
    CHECK(s.transformed.size() == x.size());
    for (double v : s.transformed) CHECK((v > 0.0 && v < 1.0));

    const DiagonalGaussian q = encode_x(m, x);
    std::vector<double> z = q.mean;
    for (std::size_t j = 0; j < m.split.d2; ++j) z[m.split.d1 + j] = s.z2_used[j];
    CHECK(decode_image(m, z) == s.transformed);

    Rng r2(1);
    const InvariantSample again = generate_with_z2(m, x, s.z2_used, r2);
    CHECK(again.transformed == s.transformed);
    CHECK_THROWS_AS(generate_with_z2(m, x, std::vector<double>(m.split.d2 + 1), r2), LatentSplitError);
    CHECK_THROWS_AS(generate_invariant(m, x, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(generate_invariant(m, x, -1.0, rng), ConfigError);
}

TEST_CASE("rejection keeps the original class when it can") {
    const SvaeModel& m = toy_model();
    const Dataset d = synth_toy_dataset(21, 5);
    Rng rng(3);
    InvariantOptions o;
    o.require_same_class = true;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const InvariantSample s = generate_invariant(m, d.image(i), 1.0, rng, o);
        CHECK(s.attempts <= o.max_attempts);
        if (s.attempts < o.max_attempts) CHECK(s.transformed_pred == s.original_pred);
    }
}

TEST_CASE("grid of radius zero is the reconstruction") {
    const SvaeModel m = random_model(6);
    const Dataset d = synth_toy_dataset(7, 2);
    const auto x = d.image(1);
    const LatentGrid g = explore_grid(m, x, 0, 1, 0.5, 0);
    REQUIRE(g.images.size() == 1);
    const DiagonalGaussian q = encode_x(m, x);
    CHECK(g.images[0] == decode_image(m, q.mean));
    CHECK(g.latents[0] == q.mean);
}

TEST_CASE("grid cells sit at the requested offsets") {
    const SvaeModel m = random_model(7);
    const Dataset d = synth_toy_dataset(7, 2);
    const auto x = d.image(2);
    const double step = 0.25;
    const LatentGrid g = explore_grid(m, x, 1, 0, step, 2);
    REQUIRE(g.side() == 5);
    REQUIRE(g.images.size() == 25);
    const DiagonalGaussian q = encode_x(m, x);
    const std::size_t d1 = m.split.d1;
    for (int a = -2; a <= 2; ++a) {
        for (int b = -2; b <= 2; ++b) {
            const auto& z = g.latents[static_cast<std::size_t>((a + 2) * 5 + b + 2)];
            for (std::size_t j = 0; j < d1; ++j) CHECK(z[j] == q.mean[j]);
            CHECK(z[d1 + 1] - q.mean[d1 + 1] == doctest::Approx(a * step).epsilon(1e-12));
            CHECK(z[d1 + 0] - q.mean[d1 + 0] == doctest::Approx(b * step).epsilon(1e-12));
            CHECK(decode_image(m, z) == g.images[static_cast<std::size_t>((a + 2) * 5 + b + 2)]);
        }
    }
    CHECK_THROWS_AS(explore_grid(m, x, 0, 2, step, 1), LatentSplitError);
    CHECK_THROWS_AS(explore_grid(m, x, 1, 1, step, 1), ConfigError);
    CHECK_THROWS_AS(explore_grid(m, x, 0, 1, 0.0, 1), ConfigError);
}

TEST_CASE("counterfactual moves only z1") {
    const SvaeModel m = random_model(8);
    const Dataset d = synth_toy_dataset(8, 2);
    const auto x = d.image(0);
    const CounterfactualResult r = counterfactual(m, x, 2, 50, 0.1);
    for (std::size_t j = m.split.d1; j < m.split.total(); ++j) CHECK(r.z[j] == r.z_start[j]);
    CHECK(r.iterations <= 50);
    CHECK(r.probabilities.size() == 4);
    CHECK(r.image == decode_image(m, r.z));
    CHECK(r.converged == (argmax(r.probabilities) == 2));
    CHECK_THROWS_AS(counterfactual(m, x, 4), DomainError);
    CHECK_THROWS_AS(counterfactual(m, x, 0, 10, 0.0), ConfigError);
}

TEST_CASE("counterfactual towards the current prediction stops at once") {
    const SvaeModel& m = toy_model();
    for (std::size_t c = 0; c < 4; ++c) {
        const std::vector<double> x = toy_template(c, 8, 8);
        const CounterfactualResult r = counterfactual(m, x, c);
        CHECK(r.iterations == 0);
        CHECK(r.z == r.z_start);
        CHECK(r.converged);
    }
}

TEST_CASE("counterfactuals reach every toy class") {
    const SvaeModel& m = toy_model();
    const Dataset d = synth_toy_dataset(41, 5);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const std::size_t from = d.labels[i];
        for (std::size_t to = 0; to < 4; ++to) {
            if (to == from) continue;
            const CounterfactualResult r = counterfactual(m, d.image(i), to, 500, 0.1);
            CAPTURE(i);
            CAPTURE(to);
            CHECK(r.target_probability >= 0.9);
            CHECK(r.converged);
            for (std::size_t j = m.split.d1; j < m.split.total(); ++j) CHECK(r.z[j] == r.z_start[j]);
        }
    }
}

TEST_CASE("toy model keeps its predictions under nuisance noise") {
    const SvaeModel& m = toy_model();
    const Dataset d = synth_toy_dataset(31, 25);
    const RetentionCurve c = invariance_test(m, d, default_sigma_grid(), 4, 2, 16);
    MESSAGE("retention at sigma=1: " << c.retention[2]);
    CHECK(c.retention[2] >= 0.9);
    for (double v : c.retention) CHECK((v >= 0.0 && v <= 1.0));
    for (double v : c.mean_l2) CHECK(v >= 0.0);
}

TEST_CASE("invariance test rejects bad inputs") {
    const SvaeModel m = random_model(9);
    const Dataset d = synth_toy_dataset(1, 2);
    const std::vector<double> empty, unsorted{1.0, 0.5}, negative{-1.0};
    CHECK_THROWS_AS(invariance_test(m, d, empty, 1, 0), ConfigError);
    CHECK_THROWS_AS(invariance_test(m, d, unsorted, 1, 0), ConfigError);
    CHECK_THROWS_AS(invariance_test(m, d, negative, 1, 0), ConfigError);
    CHECK_THROWS_AS(invariance_test(m, d, default_sigma_grid(), 0, 0), ConfigError);
    CHECK_THROWS_AS(invariance_test(m, d.slice(0, 0), default_sigma_grid(), 1, 0), ConfigError);
}

TEST_CASE("retention is reproducible in the seed") {
    const SvaeModel m = random_model(10);
    const Dataset d = synth_toy_dataset(2, 4);
    const RetentionCurve a = invariance_test(m, d, default_sigma_grid(), 2, 5, 4);
    const RetentionCurve b = invariance_test(m, d, default_sigma_grid(), 2, 5, 4);
    CHECK(a.retention == b.retention);
    CHECK(a.mean_l2 == b.mean_l2);
}
