#include "svae/distributions.hpp"

#include <algorithm>
#include <cmath>

#include "svae/errors.hpp"

namespace svae {

void DiagonalGaussian::validate() const {
    if (mean.size() != std.size()) throw DimensionError("Gaussian mean and std lengths differ");
    for (double s : std) {
        if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("Gaussian std must be positive and finite");
    }
}

DiagonalGaussian DiagonalGaussian::standard(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

std::vector<double> Categorical::probabilities() const {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= z;
    return p;
}

std::size_t Categorical::argmax() const {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

GaussianVars GaussianVars::slice(std::size_t begin, std::size_t end) const {
    return {slice_cols(mean, begin, end), slice_cols(log_std, begin, end)};
}

Var kl_diag_gaussians(const GaussianVars& q, const GaussianVars& p) {
    if (q.mean.cols() != p.mean.cols()) {
        throw DimensionError("KL between Gaussians of dimension " + std::to_string(q.mean.cols()) + " and " +
                             std::to_string(p.mean.cols()));
    }
    // The variance ratio is formed as exp(2 (q_ls - p_ls)) so that identical
    // parameters give exp(0) = 1 and the divergence cancels to exactly zero.
    Var log_ratio = p.log_std - q.log_std;
    Var diff = q.mean - p.mean;
    Var terms = log_ratio + 0.5 * exp(-2.0 * log_ratio) + 0.5 * (diff * diff) * exp(-2.0 * p.log_std) - 0.5;
    return row_sum(terms);
}

Var kl_to_standard_normal(const GaussianVars& q) {
    Var terms = 0.5 * exp(2.0 * q.log_std) + 0.5 * (q.mean * q.mean) - q.log_std - 0.5;
    return row_sum(terms);
}

Var reparam_sample(const GaussianVars& q, Var noise) {
    if (noise.rows() != q.mean.rows() || noise.cols() != q.mean.cols()) {
        throw DimensionError("reparameterisation noise shape " + shape_string(noise.value().shape()) +
                             " does not match the Gaussian " + shape_string(q.mean.value().shape()));
    }
    return q.mean + exp(q.log_std) * noise;
}

Var bernoulli_log_likelihood(Var pixel_logits, Var x) {
    const Tensor& xv = x.value();
    if (xv.size() != pixel_logits.value().size() || xv.cols() != pixel_logits.cols()) {
        throw DimensionError("pixel logits " + shape_string(pixel_logits.value().shape()) + " vs targets " +
                             shape_string(xv.shape()));
    }
    for (double v : xv.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("Bernoulli targets must lie in [0, 1]");
    }
    return row_sum(x * pixel_logits - softplus(pixel_logits));
}

namespace {

Var row_logsumexp(Var logits) {
    const Tensor& l = logits.value();
    const std::size_t rows = l.rows(), cols = l.cols();
    Tensor m = Tensor::zeros({rows, 1});
    for (std::size_t r = 0; r < rows; ++r) {
        m[r] = *std::max_element(l.data() + r * cols, l.data() + (r + 1) * cols);
    }
    Var shift = logits.tape().constant(std::move(m));
    return shift + log(row_sum(exp(logits - shift)));
}

}  // namespace

Var log_softmax(Var logits) { return logits - row_logsumexp(logits); }

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
    Tensor out = Tensor::zeros({labels.size(), num_classes});
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= num_classes) {
            throw DomainError("label " + std::to_string(labels[r]) + " out of range for " +
                              std::to_string(num_classes) + " classes");
        }
        out.at(r, labels[r]) = 1.0;
    }
    return out;
}

Var categorical_log_prob(Var logits, std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows()) throw DimensionError("one label per logits row is required");
    Var indicator = logits.tape().constant(one_hot(labels, logits.cols()));
    return row_sum(logits * indicator) - row_logsumexp(logits);
}

Var categorical_entropy(Var logits) {
    Var logp = log_softmax(logits);
    return -row_sum(exp(logp) * logp);
}

// ---------------------------------------------------------------------------

namespace {

GaussianVars gaussian_on(Tape& tape, const DiagonalGaussian& g) {
    g.validate();
    std::vector<double> ls(g.std.size());
    std::transform(g.std.begin(), g.std.end(), ls.begin(), [](double s) { return std::log(s); });
    return {tape.constant(Tensor::row(g.mean)), tape.constant(Tensor::row(ls))};
}

}  // namespace

double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p) {
    if (q.dim() != p.dim()) throw DimensionError("KL between Gaussians of different dimension");
    Tape tape;
    return kl_diag_gaussians(gaussian_on(tape, q), gaussian_on(tape, p)).value().item();
}

std::vector<double> reparam_sample(const DiagonalGaussian& q, std::span<const double> noise) {
    Tape tape;
    Var z = reparam_sample(gaussian_on(tape, q), tape.constant(Tensor::row(noise)));
    const auto v = z.value().values();
    return {v.begin(), v.end()};
}

double bernoulli_log_likelihood(std::span<const double> pixel_logits, std::span<const double> x) {
    Tape tape;
    return bernoulli_log_likelihood(tape.constant(Tensor::row(pixel_logits)), tape.constant(Tensor::row(x)))
        .value()
        .item();
}

double categorical_log_prob(const Categorical& c, std::size_t label) {
    if (label >= c.num_classes()) {
        throw DomainError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(c.num_classes()) + " classes");
    }
    Tape tape;
    const std::size_t labels[] = {label};
    return categorical_log_prob(tape.constant(Tensor::row(c.logits)), labels).value().item();
}

double categorical_entropy(const Categorical& c) {
    Tape tape;
    return categorical_entropy(tape.constant(Tensor::row(c.logits))).value().item();
}

}  // namespace svae
