#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svae/data.hpp"
#include "svae/models.hpp"

namespace svae {

/// Mean image sigmoid(decode(z)) for a batch of latent rows.
Tensor decode_images(const SvaeModel& m, const Tensor& z);
std::vector<double> decode_image(const SvaeModel& m, std::span<const double> z);

/// Latent vector (z1 at its posterior mean, z2 given).
std::vector<double> join_latent(std::span<const double> z1, std::span<const double> z2);

std::size_t argmax(std::span<const double> v);

struct InvariantSample {
    std::vector<double> original;
    std::vector<double> transformed;
    std::size_t original_pred = 0;
    std::size_t transformed_pred = 0;
    double sigma = 0.0;
    std::vector<double> z2_used;
    std::size_t attempts = 1;
};

struct InvariantOptions {
    std::size_t n_classify_samples = 32;
    /// Redraw z2 until the transformed image keeps the original prediction.
    bool require_same_class = false;
    std::size_t max_attempts = 100;
};

/// Keeps z1 at the posterior mean of q(z|x) and draws z2 ~ N(0, sigma^2 I).
InvariantSample generate_invariant(const SvaeModel& m, std::span<const double> x, double sigma, Rng& rng,
                                   const InvariantOptions& options = {});

/// Decodes (posterior-mean z1, z2) and classifies the result.
InvariantSample generate_with_z2(const SvaeModel& m, std::span<const double> x, std::span<const double> z2, Rng& rng,
                                 std::size_t n_classify_samples = 32);

struct RetentionCurve {
    std::vector<double> sigma_grid;
    std::vector<double> retention;
    std::vector<double> mean_l2;
};

const std::vector<double>& default_sigma_grid();

/// For each sigma, n_per_sigma nuisance draws per image: retention is the share of
/// draws whose prediction matches the original image's, mean_l2 the mean ||x - x~||.
/// The same standard-normal draws are scaled by every sigma.
RetentionCurve invariance_test(const SvaeModel& m, const Dataset& d, std::span<const double> sigma_grid,
                               std::size_t n_per_sigma, std::uint64_t seed, std::size_t n_classify_samples = 32);

/// Share of images whose prediction survives decoding with z2 = 0, classified
/// with the same noise as invariance_test's transformed images.
double reconstruction_consistency(const SvaeModel& m, const Dataset& d, std::uint64_t seed,
                                  std::size_t n_classify_samples = 32);

struct LatentGrid {
    std::size_t radius = 0;
    std::size_t dim_i = 0;
    std::size_t dim_j = 0;
    double step = 0.0;
    /// Row-major (2r+1) x (2r+1); cell (a, b) sits at row a + r, column b + r.
    std::vector<std::vector<double>> images;
    std::vector<std::vector<double>> latents;

    std::size_t side() const { return 2 * radius + 1; }
};

/// Offsets z2[dim_i] by a*step and z2[dim_j] by b*step around the posterior mean.
LatentGrid explore_grid(const SvaeModel& m, std::span<const double> x, std::size_t dim_i, std::size_t dim_j,
                        double step, std::size_t radius);

struct CounterfactualResult {
    std::vector<double> image;
    std::vector<double> probabilities;  // p(y | z1) at the final z1
    double target_probability = 0.0;
    bool converged = false;  // target is the most probable class at the end
    std::size_t iterations = 0;
    std::vector<double> z;
    std::vector<double> z_start;
};

/// Gradient ascent on log p(target | z1) from the posterior mean, z2 frozen;
/// stops once p(target) >= 0.9 or after max_iters steps. No steps are taken
/// when the target is already the predicted class.
CounterfactualResult counterfactual(const SvaeModel& m, std::span<const double> x, std::size_t target_class,
                                    std::size_t max_iters = 500, double step_size = 0.1);

}  // namespace svae
