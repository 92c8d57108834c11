#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svae/autodiff.hpp"

namespace svae {

/// N(mean, diag(std^2)).
struct DiagonalGaussian {
    std::vector<double> mean;
    std::vector<double> std;

    std::size_t dim() const { return mean.size(); }
    void validate() const;
    static DiagonalGaussian standard(std::size_t dim);
};

/// Distribution over classes, stored as unnormalised log-probabilities.
struct Categorical {
    std::vector<double> logits;

    std::size_t num_classes() const { return logits.size(); }
    std::vector<double> probabilities() const;
    std::size_t argmax() const;
};

/// Batched Gaussian on a tape: one row per sample, parameterised by log-std.
struct GaussianVars {
    Var mean;
    Var log_std;

    /// Columns [begin, end) of both parameter blocks.
    GaussianVars slice(std::size_t begin, std::size_t end) const;
};

// Tape-level forms. Each returns one value per row, shape (batch x 1).

/// sum_i log(p_std/q_std) + (q_std^2 + (q_mean - p_mean)^2) / (2 p_std^2) - 1/2.
/// Evaluates to exactly 0 when q and p carry identical parameters.
Var kl_diag_gaussians(const GaussianVars& q, const GaussianVars& p);
Var kl_to_standard_normal(const GaussianVars& q);
/// mean + std * noise; noise is a constant so gradients reach only mean and log-std.
Var reparam_sample(const GaussianVars& q, Var noise);
/// sum_i x_i log sigmoid(l_i) + (1 - x_i) log(1 - sigmoid(l_i)), in the form x*l - softplus(l).
/// Throws DomainError when a target lies outside [0, 1].
Var bernoulli_log_likelihood(Var pixel_logits, Var x);
/// Row-wise logits - logsumexp(logits).
Var log_softmax(Var logits);
Var categorical_log_prob(Var logits, std::span<const std::size_t> labels);
Var categorical_entropy(Var logits);

/// (labels.size() x num_classes) indicator matrix.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

// Single-sample value forms.
double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p);
std::vector<double> reparam_sample(const DiagonalGaussian& q, std::span<const double> noise);
double bernoulli_log_likelihood(std::span<const double> pixel_logits, std::span<const double> x);
double categorical_log_prob(const Categorical& c, std::size_t label);
double categorical_entropy(const Categorical& c);

}  // namespace svae
