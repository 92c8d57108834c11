#include <doctest.h>

#include <cmath>
#include <numbers>

#include "svae/distributions.hpp"
#include "svae/errors.hpp"
#include "test_util.hpp"

using namespace svae;
using namespace svae::testing;

TEST_CASE("KL of identical Gaussians is exactly zero") {
    const DiagonalGaussian q{{0.3, -1.2, 4.0}, {0.7, 1.9, 0.01}};
    CHECK(kl_diag_gaussians(q, q) == 0.0);
}

TEST_CASE("KL between unit Gaussians one apart is one half") {
    CHECK(kl_diag_gaussians({{0.0}, {1.0}}, {{1.0}, {1.0}}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("KL rejects mismatched dimensions") {
    CHECK_THROWS_AS(kl_diag_gaussians({{0.0}, {1.0}}, {{0.0, 0.0}, {1.0, 1.0}}), DimensionError);
}

TEST_CASE("closed-form KL agrees with a Monte Carlo estimate") {
    const DiagonalGaussian q{{0.3}, {0.7}};
    const DiagonalGaussian p{{0.0}, {1.0}};
    Rng rng(11);
    const int n = 1'000'000;
    double acc = 0.0, acc2 = 0.0;
    auto log_density = [](double x, double m, double s) {
        return -0.5 * std::log(2 * std::numbers::pi) - std::log(s) - 0.5 * (x - m) * (x - m) / (s * s);
    };
    for (int i = 0; i < n; ++i) {
        const double x = 0.3 + 0.7 * rng.normal();
        const double d = log_density(x, 0.3, 0.7) - log_density(x, 0.0, 1.0);
        acc += d;
        acc2 += d * d;
    }
    const double mc = acc / n;
    const double se = std::sqrt((acc2 / n - mc * mc) / n);
    CHECK(std::abs(kl_diag_gaussians(q, p) - mc) <= 3.0 * se);
}

TEST_CASE("KL is nonnegative on random pairs and zero only for identical pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 1 + rng.below(6);
        DiagonalGaussian q{std::vector<double>(d), std::vector<double>(d)};
        DiagonalGaussian p = q;
        for (std::size_t i = 0; i < d; ++i) {
            q.mean[i] = rng.normal();
            p.mean[i] = rng.normal();
            q.std[i] = std::exp(rng.normal());
            p.std[i] = std::exp(rng.normal());
        }
        CHECK(kl_diag_gaussians(q, p) > 1e-12);
        CHECK(kl_diag_gaussians(q, q) == 0.0);
    }
}

TEST_CASE("reparameterised samples") {
    const DiagonalGaussian q{{1.5, -2.0}, {0.5, 3.0}};
    const std::vector<double> zero{0.0, 0.0};
    CHECK(reparam_sample(q, zero) == q.mean);
    const std::vector<double> n{0.25, -1.75};
    CHECK(reparam_sample(DiagonalGaussian::standard(2), n) == n);

    Rng rng(9);
    const int count = 100'000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < count; ++i) {
        const double noise[] = {rng.normal(), rng.normal()};
        const double v = reparam_sample(q, noise)[1];
        s += v;
        s2 += v * v;
    }
    const double m = s / count, var = s2 / count - m * m;
    CHECK(std::abs(m - (-2.0)) <= 3.0 * 3.0 / std::sqrt(count));
    // Standard error of the sample std is about sigma / sqrt(2n).
    CHECK(std::abs(std::sqrt(var) - 3.0) <= 3.0 * 3.0 / std::sqrt(2.0 * count));
}

TEST_CASE("standardised reparameterised samples pass a Kolmogorov-Smirnov test") {
    const DiagonalGaussian q{{0.4}, {2.5}};
    Rng rng(77);
    const int n = 10'000;
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) {
        const double noise[] = {rng.normal()};
        u[i] = (reparam_sample(q, noise)[0] - 0.4) / 2.5;
    }
    std::sort(u.begin(), u.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cdf = 0.5 * std::erfc(-u[i] / std::sqrt(2.0));
        d = std::max({d, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
    }
    CHECK(d < 1.628 / std::sqrt(double(n)));  // 1% critical value
}

TEST_CASE("Bernoulli log-likelihood") {
    const std::vector<double> zeros(7, 0.0);
    const std::vector<double> x{0.0, 1.0, 0.5, 0.2, 0.9, 1.0, 0.0};
    CHECK(bernoulli_log_likelihood(zeros, x) == doctest::Approx(-7.0 * std::log(2.0)).epsilon(1e-15));

    const std::vector<double> big{30.0}, one{1.0};
    CHECK(std::abs(bernoulli_log_likelihood(big, one)) <= 1e-12);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> l(10), t(10);
        double naive = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            l[i] = 3.0 * rng.normal();
            t[i] = rng.uniform();
            const double s = 1.0 / (1.0 + std::exp(-l[i]));
            naive += t[i] * std::log(s) + (1 - t[i]) * std::log(1 - s);
        }
        CHECK(std::abs(bernoulli_log_likelihood(l, t) - naive) <= 1e-10);
    }

    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(bernoulli_log_likelihood(big, bad), DomainError);
}

TEST_CASE("categorical log-probability") {
    const Categorical uniform{std::vector<double>(10, 0.0)};
    CHECK(categorical_log_prob(uniform, 3) == doctest::Approx(std::log(0.1)).epsilon(1e-15));

    Categorical dominant{std::vector<double>(10, 0.0)};
    dominant.logits[4] = 30.0;
    CHECK(std::abs(categorical_log_prob(dominant, 4)) < 1e-11);
    CHECK_THROWS_AS(categorical_log_prob(uniform, 10), DomainError);

    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Categorical c{std::vector<double>(6)};
        for (double& v : c.logits) v = 4.0 * rng.normal();
        double z = 0.0;
        for (double v : c.logits) z += std::exp(v);
        const std::size_t k = rng.below(6);
        CHECK(std::abs(categorical_log_prob(c, k) - std::log(std::exp(c.logits[k]) / z)) <= 1e-12);
    }
}

TEST_CASE("categorical entropy") {
    const Categorical uniform{std::vector<double>(10, 0.0)};
    CHECK(categorical_entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-15));

    Categorical saturated{std::vector<double>(10, 0.0)};
    saturated.logits[0] = 60.0;
    CHECK(categorical_entropy(saturated) < 1e-20);

    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Categorical c{std::vector<double>(5)};
        for (double& v : c.logits) v = 3.0 * rng.normal();
        const auto p = c.probabilities();
        double h = 0.0;
        for (double v : p) h -= v * std::log(v);
        const double e = categorical_entropy(c);
        CHECK(std::abs(e - h) <= 1e-12);
        CHECK(e >= 0.0);
        CHECK(e <= std::log(5.0) + 1e-15);
    }
}

TEST_CASE("distribution gradients match central differences") {
    Rng rng(21);
    const std::size_t labels[] = {2, 0, 1};
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = random_tensor(rng, 3, 4);
        const Tensor b = random_tensor(rng, 3, 4, 0.5);
        const Tensor c = random_tensor(rng, 3, 4);
        const Tensor d = random_tensor(rng, 3, 4, 0.5);
        Tensor targets = Tensor::zeros({3, 4});
        for (double& v : targets.values()) v = rng.uniform();

        auto kl_wrt = [&](int which) {
            return [&, which](Var x) {
                Tape& t = x.tape();
                GaussianVars q{which == 0 ? x : t.constant(a), which == 1 ? x : t.constant(b)};
                GaussianVars p{which == 2 ? x : t.constant(c), which == 3 ? x : t.constant(d)};
                return sum(kl_diag_gaussians(q, p));
            };
        };
        CHECK(gradient_check(kl_wrt(0), a) <= 1e-6);
        CHECK(gradient_check(kl_wrt(1), b) <= 1e-6);
        CHECK(gradient_check(kl_wrt(2), c) <= 1e-6);
        CHECK(gradient_check(kl_wrt(3), d) <= 1e-6);
        CHECK(gradient_check([&](Var x) { return sum(kl_to_standard_normal({x, x.tape().constant(b)})); }, a) <= 1e-6);
        CHECK(gradient_check(
                  [&](Var x) {
                      Tape& t = x.tape();
                      return sum(reparam_sample({t.constant(a), x}, t.constant(c)) * t.constant(d));
                  },
                  b) <= 1e-6);
        CHECK(gradient_check([&](Var x) { return sum(bernoulli_log_likelihood(x, x.tape().constant(targets))); }, a) <=
              1e-6);
        CHECK(gradient_check([&](Var x) { return sum(categorical_log_prob(x, labels)); }, a) <= 1e-6);
        CHECK(gradient_check([&](Var x) { return sum(categorical_entropy(x)); }, a) <= 1e-6);
    }
}
