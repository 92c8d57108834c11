#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svae/data.hpp"
#include "svae/models.hpp"

namespace svae {

/// Differentiable scalar per row: maps a (B x P) input on some tape to (B x 1).
/// Rows must not interact, so one backward pass yields every row's gradient.
using RowFunction = std::function<Var(Var)>;

enum class AttributionMethod { saliency, ixg, ig, gradshap };
std::string to_string(AttributionMethod m);
AttributionMethod parse_attribution_method(const std::string& s);

struct AttributionTarget {
    enum class Kind { classifier, divergence };
    Kind kind = Kind::classifier;
    std::size_t class_index = 0;  // classifier
    std::size_t k = 1;            // divergence: latent block 1 (z1) or 2 (z2)

    std::string to_string() const;
};

/// "classifier:<c>" or "divergence:k=<1|2>".
AttributionTarget parse_attribution_target(const std::string& s);

struct AttributionMap {
    std::vector<double> values;
    AttributionMethod method = AttributionMethod::saliency;
    AttributionTarget target;
};

/// x -> log p(c | z1) with z1 at the posterior mean of q(z|x).
RowFunction classifier_target(const SvaeModel& m, std::size_t class_index);

/// x~ -> KL(q(z_k | x_ref) || q(z_k | x~)); x_ref is held fixed. Zero at x~ = x_ref.
RowFunction divergence_target(const SvaeModel& m, std::span<const double> x_ref, std::size_t k);

RowFunction make_target(const SvaeModel& m, const AttributionTarget& target, std::span<const double> x_ref);

/// f at every row of xs.
std::vector<double> evaluate_rows(const RowFunction& f, const Tensor& xs);
double evaluate_at(const RowFunction& f, std::span<const double> x);
/// Row-wise gradients of f at every row of xs.
Tensor gradient_rows(const RowFunction& f, const Tensor& xs);

std::vector<double> saliency(const RowFunction& f, std::span<const double> x);
std::vector<double> input_x_gradient(const RowFunction& f, std::span<const double> x);
/// Midpoint rule over `steps` interpolants between baseline and x.
std::vector<double> integrated_gradients(const RowFunction& f, std::span<const double> x,
                                         std::span<const double> baseline, std::size_t steps);
/// Mean of (x - b) * grad f(b + u (x - b) + eps), b drawn from baselines, u ~ U[0,1), eps ~ N(0, sigma^2).
std::vector<double> gradient_shap(const RowFunction& f, std::span<const double> x, const Tensor& baselines,
                                  std::size_t n_samples, double noise_sigma, Rng& rng);

/// `count` distinct images drawn from pool (all of them if the pool is smaller).
Tensor sample_baselines(const Dataset& pool, std::size_t count, std::uint64_t seed);
constexpr std::size_t kDefaultShapBaselines = 16;

struct AttributionOptions {
    std::size_t ig_steps = 256;
    std::size_t shap_samples = 200;
    double shap_noise = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> ig_baseline;  // empty: all-zeros image
};

/// Dispatches on method. x_ref is only read by divergence targets;
/// shap_baselines (one image per row) only by GradientShap.
AttributionMap attribute(const SvaeModel& m, std::span<const double> x, AttributionMethod method,
                         const AttributionTarget& target, std::span<const double> x_ref, const Tensor& shap_baselines,
                         const AttributionOptions& options = {});

}  // namespace svae
