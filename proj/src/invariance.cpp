#include "svae/invariance.hpp"

#include <algorithm>
#include <cmath>

#include "svae/errors.hpp"

namespace svae {

namespace {

constexpr std::size_t kChunk = 256;

void check_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::size_t predict(const SvaeModel& m, std::span<const double> x, std::size_t n, Rng& rng) {
    return argmax(classify(m, x, n, rng).probabilities());
}

}  // namespace

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensor decode_images(const SvaeModel& m, const Tensor& z) {
    const std::size_t n = z.rows(), p = m.input_dim, d = z.cols();
    Tensor out = Tensor::zeros({n, p});
    for (std::size_t begin = 0; begin < n; begin += kChunk) {
        const std::size_t end = std::min(n, begin + kChunk);
        std::vector<double> rows(z.data() + begin * d, z.data() + end * d);
        const Tensor logits = decode_batch(m, Tensor({end - begin, d}, std::move(rows)));
        for (std::size_t i = 0; i < logits.size(); ++i) out[begin * p + i] = 1.0 / (1.0 + std::exp(-logits[i]));
    }
    return out;
}

std::vector<double> decode_image(const SvaeModel& m, std::span<const double> z) {
    const Tensor img = decode_images(m, Tensor::row(z));
    return {img.values().begin(), img.values().end()};
}

std::vector<double> join_latent(std::span<const double> z1, std::span<const double> z2) {
    std::vector<double> z(z1.begin(), z1.end());
    z.insert(z.end(), z2.begin(), z2.end());
    return z;
}

InvariantSample generate_with_z2(const SvaeModel& m, std::span<const double> x, std::span<const double> z2, Rng& rng,
                                 std::size_t n_classify_samples) {
    if (z2.size() != m.split.d2) {
        throw LatentSplitError("nuisance vector needs " + std::to_string(m.split.d2) + " entries, got " +
                               std::to_string(z2.size()));
    }
    const DiagonalGaussian q = encode_x(m, x);
    InvariantSample s;
    s.original.assign(x.begin(), x.end());
    s.z2_used.assign(z2.begin(), z2.end());
    s.transformed = decode_image(m, join_latent(std::span(q.mean).first(m.split.d1), z2));
    s.original_pred = predict(m, x, n_classify_samples, rng);
    s.transformed_pred = predict(m, s.transformed, n_classify_samples, rng);
    return s;
}

InvariantSample generate_invariant(const SvaeModel& m, std::span<const double> x, double sigma, Rng& rng,
                                   const InvariantOptions& options) {
    check_sigma(sigma);
    if (options.max_attempts == 0) throw ConfigError("max_attempts must be positive");
    const DiagonalGaussian q = encode_x(m, x);
    const auto z1 = std::span(q.mean).first(m.split.d1);
    InvariantSample s;
    s.original.assign(x.begin(), x.end());
    s.sigma = sigma;
    s.original_pred = predict(m, x, options.n_classify_samples, rng);
    for (s.attempts = 1;; ++s.attempts) {
        s.z2_used.resize(m.split.d2);
        rng.fill_normal(s.z2_used, sigma);
        s.transformed = decode_image(m, join_latent(z1, s.z2_used));
        s.transformed_pred = predict(m, s.transformed, options.n_classify_samples, rng);
        if (!options.require_same_class || s.transformed_pred == s.original_pred ||
            s.attempts == options.max_attempts) {
            break;
        }
    }
    return s;
}

const std::vector<double>& default_sigma_grid() {
    static const std::vector<double> grid{0.1, 0.5, 1.0, 2.0, 5.0};
    return grid;
}

RetentionCurve invariance_test(const SvaeModel& m, const Dataset& d, std::span<const double> sigma_grid,
                               std::size_t n_per_sigma, std::uint64_t seed, std::size_t n_classify_samples) {
    if (d.size() == 0) throw ConfigError("invariance test needs a non-empty dataset");
    if (sigma_grid.empty()) throw ConfigError("sigma grid is empty");
    if (n_per_sigma == 0) throw ConfigError("need at least one draw per sigma");
    for (std::size_t k = 0; k < sigma_grid.size(); ++k) {
        check_sigma(sigma_grid[k]);
        if (k && !(sigma_grid[k] > sigma_grid[k - 1])) throw ConfigError("sigma grid must be increasing");
    }
    const std::size_t n = d.size(), d1 = m.split.d1, d2 = m.split.d2, dz = d1 + d2, p = m.input_dim;

    Rng orig_rng = Rng::derive(seed, 0);
    const Tensor orig_probs = classify_batch(m, d.images, n_classify_samples, orig_rng);
    std::vector<std::size_t> orig_pred(n);
    for (std::size_t i = 0; i < n; ++i) orig_pred[i] = argmax(orig_probs.row_span(i));
    const GaussianBatch q = encode_x_batch(m, d.images);

    // Row r*n + i: draw r for image i.
    Tensor eps = Tensor::zeros({n_per_sigma * n, d2});
    for (std::size_t r = 0; r < n_per_sigma; ++r) {
        Rng rng = Rng::derive(seed, 1, r);
        rng.fill_normal(std::span(eps.data() + r * n * d2, n * d2));
    }

    RetentionCurve curve;
    curve.sigma_grid.assign(sigma_grid.begin(), sigma_grid.end());
    for (double sigma : sigma_grid) {
        Tensor z = Tensor::zeros({n_per_sigma * n, dz});
        for (std::size_t r = 0; r < n_per_sigma; ++r) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t row = r * n + i;
                for (std::size_t j = 0; j < d1; ++j) z.at(row, j) = q.mean.at(i, j);
                for (std::size_t j = 0; j < d2; ++j) z.at(row, d1 + j) = sigma * eps.at(row, j);
            }
        }
        const Tensor images = decode_images(m, z);
        Rng cls_rng = Rng::derive(seed, 2);
        const Tensor probs = classify_batch(m, images, n_classify_samples, cls_rng);
        std::size_t kept = 0;
        double l2 = 0.0;
        for (std::size_t row = 0; row < z.rows(); ++row) {
            const std::size_t i = row % n;
            kept += argmax(probs.row_span(row)) == orig_pred[i];
            l2 += l2_distance(d.image(i), std::span(images.data() + row * p, p));
        }
        curve.retention.push_back(static_cast<double>(kept) / static_cast<double>(z.rows()));
        curve.mean_l2.push_back(l2 / static_cast<double>(z.rows()));
    }
    return curve;
}

double reconstruction_consistency(const SvaeModel& m, const Dataset& d, std::uint64_t seed,
                                  std::size_t n_classify_samples) {
    if (d.size() == 0) throw ConfigError("consistency check needs a non-empty dataset");
    const std::size_t n = d.size(), d1 = m.split.d1, dz = m.split.total();
    Rng orig_rng = Rng::derive(seed, 0);
    const Tensor orig_probs = classify_batch(m, d.images, n_classify_samples, orig_rng);
    const GaussianBatch q = encode_x_batch(m, d.images);
    Tensor z = Tensor::zeros({n, dz});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d1; ++j) z.at(i, j) = q.mean.at(i, j);
    Rng cls_rng = Rng::derive(seed, 2);
    const Tensor probs = classify_batch(m, decode_images(m, z), n_classify_samples, cls_rng);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) kept += argmax(probs.row_span(i)) == argmax(orig_probs.row_span(i));
    return static_cast<double>(kept) / static_cast<double>(n);
}

LatentGrid explore_grid(const SvaeModel& m, std::span<const double> x, std::size_t dim_i, std::size_t dim_j,
                        double step, std::size_t radius) {
    const std::size_t d1 = m.split.d1, d2 = m.split.d2;
    if (dim_i >= d2 || dim_j >= d2) {
        throw LatentSplitError("grid dimensions must index the " + std::to_string(d2) + " nuisance dimensions");
    }
    if (dim_i == dim_j) throw ConfigError("grid needs two distinct dimensions");
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("grid step must be positive");
    const DiagonalGaussian q = encode_x(m, x);
    LatentGrid g;
    g.radius = radius;
    g.dim_i = dim_i;
    g.dim_j = dim_j;
    g.step = step;
    const std::size_t side = g.side();
    Tensor z = Tensor::zeros({side * side, d1 + d2});
    const auto r = static_cast<long long>(radius);
    for (long long a = -r; a <= r; ++a) {
        for (long long b = -r; b <= r; ++b) {
            const std::size_t cell = static_cast<std::size_t>(a + r) * side + static_cast<std::size_t>(b + r);
            std::vector<double> latent = q.mean;
            latent[d1 + dim_i] += static_cast<double>(a) * step;
            latent[d1 + dim_j] += static_cast<double>(b) * step;
            std::copy(latent.begin(), latent.end(), z.row_span(cell).begin());
            g.latents.push_back(std::move(latent));
        }
    }
    const Tensor images = decode_images(m, z);
    for (std::size_t c = 0; c < side * side; ++c) {
        const auto row = images.row_span(c);
        g.images.emplace_back(row.begin(), row.end());
    }
    return g;
}

CounterfactualResult counterfactual(const SvaeModel& m, std::span<const double> x, std::size_t target_class,
                                    std::size_t max_iters, double step_size) {
    if (target_class >= m.num_classes) {
        throw DomainError("target class " + std::to_string(target_class) + " is out of range");
    }
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step size must be positive");
    const std::size_t d1 = m.split.d1;
    const DiagonalGaussian q = encode_x(m, x);
    CounterfactualResult res;
    res.z_start = q.mean;
    res.z = q.mean;
    const std::size_t target[] = {target_class};

    Tensor z1 = Tensor::row(std::span(res.z).first(d1));
    for (;;) {
        Tape tape;
        SvaeGraph g(m, tape.bind_constants(m.params));
        Var zv = tape.variable(z1);
        Var logits = g.classify_latent(zv);
        Var logp = log_softmax(logits);
        const Tensor& lp = logp.value();
        res.probabilities.resize(m.num_classes);
        for (std::size_t k = 0; k < m.num_classes; ++k) res.probabilities[k] = std::exp(lp[k]);
        res.target_probability = res.probabilities[target_class];
        const bool is_argmax = argmax(res.probabilities) == target_class;
        if (res.target_probability >= 0.9 || res.iterations >= max_iters || (res.iterations == 0 && is_argmax)) break;
        tape.backward(sum(categorical_log_prob(logits, target)));
        const Tensor grad = tape.grad(zv);
        for (std::size_t j = 0; j < d1; ++j) z1[j] += step_size * grad[j];
        ++res.iterations;
    }
    std::copy(z1.values().begin(), z1.values().end(), res.z.begin());
    res.converged = argmax(res.probabilities) == target_class;
    res.image = decode_image(m, res.z);
    return res;
}

}  // namespace svae
