#include <doctest.h>

#include <cmath>

#include "svae/errors.hpp"
#include "svae/models.hpp"
#include "test_util.hpp"

using namespace svae;
using namespace svae::testing;

namespace {

ArchitectureOptions small_arch(Activation act = Activation::relu) {
    ArchitectureOptions o;
    o.encoder_hidden = {7, 5};
    o.classifier_hidden = {4};
    o.activation = act;
    return o;
}

SvaeModel random_svae(std::uint64_t seed, std::size_t p = 6, std::size_t c = 3, LatentSplit split = {2, 2}) {
    return SvaeModel::create(p, c, split, small_arch(), seed, false);
}

void perturb_all(ParameterSet& params, Rng& rng, double scale) {
    for (auto& [name, t] : params)
        for (double& v : t.values()) v += scale * rng.normal();
}

}  // namespace

TEST_CASE("zero-initialised SVAE has closed-form outputs") {
    const std::size_t p = 16, c = 10;
    const SvaeModel m = SvaeModel::create(p, c, {10, 5}, ArchitectureOptions{{12, 8}, {6}}, 1);
    const std::vector<double> x(p, 0.5);

    for (const DiagonalGaussian& g : {encode_x(m, x), encode_xy(m, x, 3)}) {
        CHECK(g.mean == std::vector<double>(15, 0.0));
        CHECK(g.std == std::vector<double>(15, 1.0));
    }
    CHECK(decode(m, std::vector<double>(15, 0.7)) == std::vector<double>(p, 0.0));
    const auto probs = classify_latent(m, std::vector<double>(10, 2.0)).probabilities();
    for (double v : probs) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));

    Rng rng(2);
    for (std::size_t n : {1, 7}) {
        for (double v : classify(m, x, n, rng).probabilities()) CHECK(v == doctest::Approx(0.1).epsilon(1e-14));
    }

    Tensor xb = Tensor::filled({4, p}, 0.5);
    const std::size_t labels[] = {0, 3, 9, 2};
    const ElboTerms t = svae_elbo(m, xb, labels, 0.5, 1.0, random_tensor(rng, 4, 15));
    CHECK(t.reconstruction == doctest::Approx(-double(p) * std::log(2.0)).epsilon(1e-14));
    CHECK(t.regularization_kl == 0.0);
    CHECK(t.sufficiency_kl == 0.0);
    CHECK(t.classifier_loglik == doctest::Approx(std::log(0.1)).epsilon(1e-14));
}

TEST_CASE("encoders and decoder are deterministic") {
    const SvaeModel m = random_svae(3);
    Rng rng(4);
    const Tensor x = random_images(rng, 1, 6);
    CHECK(encode_x(m, x.values()).mean == encode_x(m, x.values()).mean);
    CHECK(encode_xy(m, x.values(), 1).std == encode_xy(m, x.values(), 1).std);
    const std::vector<double> z{0.1, -0.3, 0.8, 1.2};
    CHECK(decode(m, z) == decode(m, z));
}

TEST_CASE("shape and range errors") {
    const SvaeModel m = random_svae(3);
    CHECK_THROWS_AS(encode_x(m, std::vector<double>(5, 0.5)), DimensionError);
    CHECK_THROWS_AS(encode_x(m, std::vector<double>(6, 1.5)), DomainError);
    CHECK_THROWS_AS(encode_xy(m, std::vector<double>(6, 0.5), 3), DomainError);
    CHECK_THROWS_AS(decode(m, std::vector<double>(3, 0.0)), DimensionError);
    CHECK_THROWS_AS(classify_latent(m, std::vector<double>(4, 0.0)), LatentSplitError);
    Rng rng(1);
    CHECK_THROWS_AS(classify(m, std::vector<double>(6, 0.5), 0, rng), ConfigError);

    const Tensor x = Tensor::filled({1, 6}, 0.5);
    const std::size_t label[] = {0};
    const Tensor noise = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(svae_elbo(m, x, label, 0.0, 1.0, noise), ConfigError);
    CHECK_THROWS_AS(svae_elbo(m, x, label, 1.0, 1.0, noise), ConfigError);
    CHECK_THROWS_AS(svae_elbo(m, x, label, 0.5, 0.0, noise), ConfigError);

    NetworkSpecs nets = m.networks;
    nets["cls"].layer_widths.front() = 4;
    CHECK_THROWS_AS(SvaeModel::from_parts(6, 3, {2, 2}, nets, m.params), LatentSplitError);
}

TEST_CASE("ELBO terms reassemble and KL terms are nonnegative") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        SvaeModel m = random_svae(100 + trial);
        perturb_all(m.params, rng, 0.3);
        const Tensor x = random_images(rng, 5, 6);
        const auto labels = random_labels(rng, 5, 3);
        const double beta = 0.05 + 0.9 * rng.uniform(), alpha = 0.1 + 10 * rng.uniform();
        const ElboTerms t = svae_elbo(m, x, labels, beta, alpha, random_tensor(rng, 5, 4));
        CHECK(t.regularization_kl >= 0.0);
        CHECK(t.sufficiency_kl >= 0.0);
        const double re = beta * t.reconstruction - beta * t.regularization_kl - (1 - beta) * t.sufficiency_kl +
                          alpha * t.classifier_loglik;
        CHECK(std::abs(re - t.total) <= 1e-12 * std::max(1.0, std::abs(t.total)));
    }
}

TEST_CASE("beta limits") {
    SvaeModel m = random_svae(8);
    Rng rng(9);
    perturb_all(m.params, rng, 0.3);
    const Tensor x = random_images(rng, 3, 6);
    const auto labels = random_labels(rng, 3, 3);
    const Tensor noise = random_tensor(rng, 3, 4);

    const ElboTerms lo = svae_elbo(m, x, labels, 1e-12, 2.0, noise);
    CHECK(std::abs(lo.total - (-lo.sufficiency_kl + 2.0 * lo.classifier_loglik)) <= 1e-10);
    const ElboTerms hi = svae_elbo(m, x, labels, 1 - 1e-12, 2.0, noise);
    CHECK(std::abs(hi.total - (hi.reconstruction - hi.regularization_kl + 2.0 * hi.classifier_loglik)) <= 1e-10);
}

TEST_CASE("SVAE ELBO gradient matches finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        SvaeModel m = random_svae(200 + trial);
        perturb_all(m.params, rng, 0.2);
        const Tensor x = random_images(rng, 3, 6);
        const auto labels = random_labels(rng, 3, 3);
        const Tensor noise = random_tensor(rng, 3, 4);
        const ElboEvaluation ev = svae_elbo_gradient(m, x, labels, 0.7, 3.0, noise);
        CHECK(ev.terms.total == svae_elbo(m, x, labels, 0.7, 3.0, noise).total);
        auto objective = [&](const ParameterSet& ps) {
            SvaeModel copy = m;
            copy.params = ps;
            return svae_elbo(copy, x, labels, 0.7, 3.0, noise).total;
        };
        CHECK(parameter_gradient_check(objective, m.params, ev.total_gradient) <= 1e-6);
    }
}

TEST_CASE("z2 never reaches the classifier") {
    SvaeModel m = random_svae(5, 6, 3, {3, 4});
    Rng rng(12);
    perturb_all(m.params, rng, 0.5);
    std::vector<double> z(7);
    for (int trial = 0; trial < 200; ++trial) {
        for (double& v : z) v = 2 * rng.normal();
        const std::vector<double> z1(z.begin(), z.begin() + 3);
        const Categorical before = classify_latent(m, z1);
        for (std::size_t j = 3; j < 7; ++j) z[j] += 5 * rng.normal();
        CHECK(classify_latent(m, std::vector<double>(z.begin(), z.begin() + 3)).logits == before.logits);
    }

    // The classifier log-likelihood has an exactly zero gradient in z2.
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    Var zv = tape.variable(random_tensor(rng, 4, 7));
    const std::size_t labels[] = {0, 1, 2, 1};
    Var loss = sum(categorical_log_prob(g.classify_latent(slice_cols(zv, 0, 3)), labels));
    tape.backward(loss);
    const Tensor gz = tape.grad(zv);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t j = 3; j < 7; ++j) CHECK(gz.at(r, j) == 0.0);
    }
    CHECK_THROWS_AS(g.classify_latent(zv), LatentSplitError);
}

TEST_CASE("classify with a collapsed posterior equals the classifier at the mean") {
    SvaeModel m = random_svae(6);
    Rng rng(13);
    perturb_all(m.params, rng, 0.3);
    // Push the log-std outputs of enc_x far negative.
    Tensor& bias = m.params.at(bias_name("enc_x", 2));
    for (std::size_t j = 4; j < 8; ++j) bias[j] = -40.0;
    const Tensor x = random_images(rng, 1, 6);
    const DiagonalGaussian q = encode_x(m, x.values());
    const std::vector<double> z1(q.mean.begin(), q.mean.begin() + 2);
    const auto direct = classify_latent(m, z1).probabilities();
    const auto mc = classify(m, x.values(), 1, rng).probabilities();
    for (std::size_t k = 0; k < direct.size(); ++k) CHECK(std::abs(mc[k] - direct[k]) <= 1e-12);
}

TEST_CASE("batched classification matches per-image classification") {
    SvaeModel m = random_svae(7);
    Rng rng(14);
    perturb_all(m.params, rng, 0.3);
    const Tensor x = random_images(rng, 5, 6);
    Rng a(99);
    const Tensor batch = classify_batch(m, x, 16, a);
    for (std::size_t r = 0; r < 5; ++r) {
        Rng b(99);
        const auto single = classify(m, x.row_span(r), 16, b).probabilities();
        double total = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(std::abs(batch.at(r, k) - single[k]) <= 1e-15);
            total += batch.at(r, k);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero-initialised SemiVAE has closed-form terms") {
    const std::size_t p = 12, c = 4;
    const SemiVaeModel m = SemiVaeModel::create(p, c, 5, ArchitectureOptions{{9}, {}}, 2);
    Rng rng(3);
    const Tensor x = Tensor::filled({3, p}, 0.5);
    const std::size_t labels[] = {0, 3, 1};
    const SemiVaeTerms t = semivae_elbo(m, x, labels, 2.0, random_tensor(rng, c * 3, 5));
    const double u = -double(p) * std::log(2.0);
    CHECK(t.labeled_u == doctest::Approx(u).epsilon(1e-14));
    CHECK(t.marginal_u == doctest::Approx(u).epsilon(1e-14));
    CHECK(t.reconstruction == doctest::Approx(u).epsilon(1e-14));
    CHECK(t.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(t.classifier_loglik == doctest::Approx(std::log(0.25)).epsilon(1e-14));
    CHECK(t.total == doctest::Approx(2 * u + std::log(4.0) + 2.0 * std::log(0.25)).epsilon(1e-14));
    for (double v : semivae_classify(m, x.row_span(0)).probabilities()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("SemiVAE terms: entropy bounds, reassembly and errors") {
    Rng rng(40);
    for (int trial = 0; trial < 20; ++trial) {
        SemiVaeModel m = SemiVaeModel::create(6, 3, 3, small_arch(), 300 + trial, false);
        perturb_all(m.params, rng, 0.5);
        const Tensor x = random_images(rng, 4, 6);
        const auto labels = random_labels(rng, 4, 3);
        const SemiVaeTerms t = semivae_elbo(m, x, labels, 1.5, random_tensor(rng, 12, 3));
        CHECK(t.entropy >= 0.0);
        CHECK(t.entropy <= std::log(3.0) + 1e-15);
        CHECK(std::abs(t.labeled_u + t.marginal_u + t.entropy + 1.5 * t.classifier_loglik - t.total) <= 1e-12);
    }
    SemiVaeModel m = SemiVaeModel::create(6, 3, 3, small_arch(), 1, false);
    const Tensor x = Tensor::filled({2, 6}, 0.5);
    const std::size_t labels[] = {0, 1};
    CHECK_THROWS_AS(semivae_elbo(m, x, labels, 0.0, Tensor::zeros({6, 3})), ConfigError);
    CHECK_THROWS_AS(semivae_elbo(m, x, labels, 1.0, Tensor::zeros({2, 3})), DimensionError);
    CHECK(semivae_classify(m, x.row_span(0)).logits == semivae_classify(m, x.row_span(0)).logits);
}

TEST_CASE("SemiVAE ELBO gradient matches finite differences") {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        SemiVaeModel m = SemiVaeModel::create(6, 3, 3, small_arch(), 400 + trial, false);
        perturb_all(m.params, rng, 0.2);
        const Tensor x = random_images(rng, 2, 6);
        const auto labels = random_labels(rng, 2, 3);
        const Tensor noise = random_tensor(rng, 6, 3);
        const SemiVaeEvaluation ev = semivae_elbo_gradient(m, x, labels, 2.5, noise);
        auto objective = [&](const ParameterSet& ps) {
            SemiVaeModel copy = m;
            copy.params = ps;
            return semivae_elbo(copy, x, labels, 2.5, noise).total;
        };
        CHECK(parameter_gradient_check(objective, m.params, ev.total_gradient) <= 1e-6);
    }
}

TEST_CASE("SemiVAE batched classification matches single images") {
    SemiVaeModel m = SemiVaeModel::create(6, 3, 3, small_arch(), 9, false);
    Rng rng(42);
    perturb_all(m.params, rng, 0.5);
    const Tensor x = random_images(rng, 4, 6);
    const Tensor batch = semivae_classify_batch(m, x);
    for (std::size_t r = 0; r < 4; ++r) {
        const auto p = semivae_classify(m, x.row_span(r)).probabilities();
        for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(batch.at(r, k) - p[k]) <= 1e-15);
    }
}
