#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svae/autodiff.hpp"
#include "svae/distributions.hpp"
#include "svae/mlp.hpp"
#include "svae/rng.hpp"

namespace svae {

/// Partition of the latent code into classifier dimensions z1 and nuisance dimensions z2.
struct LatentSplit {
    std::size_t d1 = 10;
    std::size_t d2 = 5;

    std::size_t total() const { return d1 + d2; }
    void validate() const;

    friend bool operator==(const LatentSplit&, const LatentSplit&) = default;
};

/// Layout knobs shared by both model families; the decoder mirrors the encoder.
struct ArchitectureOptions {
    std::vector<std::size_t> encoder_hidden{512, 256};
    std::vector<std::size_t> classifier_hidden{64};
    Activation activation = Activation::relu;
};

using NetworkSpecs = std::map<std::string, MlpSpec>;

enum class ModelKind { svae, semivae };
std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Network layouts for a model family: enc_x/enc_xy/dec/cls for the SVAE,
/// enc/dec/cls for the SemiVAE.
NetworkSpecs make_network_specs(ModelKind kind, std::size_t input_dim, std::size_t num_classes,
                                const LatentSplit& split, const ArchitectureOptions& options);

/// Batched diagonal Gaussian values (one row per sample).
struct GaussianBatch {
    Tensor mean;
    Tensor log_std;

    std::size_t rows() const { return mean.rows(); }
    DiagonalGaussian row(std::size_t r) const;
};

/// The four scalar terms of the supervised objective and their weighted total.
struct ElboTerms {
    double reconstruction = 0.0;
    double regularization_kl = 0.0;
    double sufficiency_kl = 0.0;
    double classifier_loglik = 0.0;
    double total = 0.0;
};

/// Supervised VAE: q(z|x), q(z|x,y), p(x|z) and a classifier p(y|z1) that never sees z2.
struct SvaeModel {
    LatentSplit split;
    std::size_t num_classes = 0;
    std::size_t input_dim = 0;
    NetworkSpecs networks;
    ParameterSet params;

    static SvaeModel create(std::size_t input_dim, std::size_t num_classes, const LatentSplit& split,
                            const ArchitectureOptions& options, std::uint64_t seed, bool zero_final_layer = true);
    static SvaeModel from_parts(std::size_t input_dim, std::size_t num_classes, const LatentSplit& split,
                                NetworkSpecs networks, ParameterSet params);
    void validate() const;
    const MlpSpec& net(const std::string& name) const;
};

/// Tape-bound view of an SvaeModel, used to build differentiable expressions.
class SvaeGraph {
public:
    SvaeGraph(const SvaeModel& model, const BoundParameters& bound);

    GaussianVars encode_x(Var x) const;
    GaussianVars encode_xy(Var x, Var y_one_hot) const;
    Var decode(Var z) const;
    /// Accepts exactly d1 columns; anything else is a latent-split violation.
    Var classify_latent(Var z1) const;

    const SvaeModel& model() const { return model_; }

private:
    const SvaeModel& model_;
    MlpVars enc_x_, enc_xy_, dec_, cls_;
};

struct ElboVars {
    Var reconstruction, regularization_kl, sufficiency_kl, classifier_loglik, total;
    ElboTerms values() const;
};

/// Batch-averaged supervised ELBO with one reparameterised draw per sample:
/// total = beta*R - beta*KL(q(z|x,y)||p(z)) - (1-beta)*KL(q(z|x,y)||q(z|x)) + alpha*log p(y|z1).
ElboVars svae_elbo(const SvaeGraph& graph, Var x, std::span<const std::size_t> labels, double beta, double alpha,
                   Var noise);

void check_svae_hyperparameters(double beta, double alpha);

// Value-level SVAE operations.
DiagonalGaussian encode_x(const SvaeModel& m, std::span<const double> x);
DiagonalGaussian encode_xy(const SvaeModel& m, std::span<const double> x, std::size_t y);
std::vector<double> decode(const SvaeModel& m, std::span<const double> z);
Categorical classify_latent(const SvaeModel& m, std::span<const double> z1);
ElboTerms svae_elbo(const SvaeModel& m, const Tensor& x, std::span<const std::size_t> labels, double beta,
                    double alpha, const Tensor& noise);
/// Monte Carlo estimate of p(y|x) = E_{q(z1|x)} p(y|z1), averaging probabilities.
Categorical classify(const SvaeModel& m, std::span<const double> x, std::size_t n_samples, Rng& rng);

GaussianBatch encode_x_batch(const SvaeModel& m, const Tensor& x);
Tensor decode_batch(const SvaeModel& m, const Tensor& z);
/// Class probabilities (rows x C). One (n_samples x d1) noise block is drawn
/// from rng and shared by every row, so a row's result equals classify() on
/// that image with an identically seeded rng.
Tensor classify_batch(const SvaeModel& m, const Tensor& x, std::size_t n_samples, Rng& rng);

struct ElboEvaluation {
    ElboTerms terms;
    Gradients total_gradient;
};
ElboEvaluation svae_elbo_gradient(const SvaeModel& m, const Tensor& x, std::span<const std::size_t> labels,
                                  double beta, double alpha, const Tensor& noise);

/// Per-sample terms of the M2 objective, batch-averaged.
struct SemiVaeTerms {
    double labeled_u = 0.0;        ///< U(x, y)
    double marginal_u = 0.0;       ///< sum_c q(c|x) U(x, c)
    double entropy = 0.0;          ///< H(q(y|x))
    double classifier_loglik = 0.0;
    double reconstruction = 0.0;   ///< E log p(x|y,z) inside U(x, y)
    double total = 0.0;            ///< labeled_u + marginal_u + entropy + alpha * classifier_loglik
};

/// Semi-supervised VAE (M2) used fully supervised: q(z|x,y), p(x|y,z), q(y|x).
struct SemiVaeModel {
    std::size_t latent_dim = 0;
    std::size_t num_classes = 0;
    std::size_t input_dim = 0;
    NetworkSpecs networks;
    ParameterSet params;

    static SemiVaeModel create(std::size_t input_dim, std::size_t num_classes, std::size_t latent_dim,
                               const ArchitectureOptions& options, std::uint64_t seed, bool zero_final_layer = true);
    static SemiVaeModel from_parts(std::size_t input_dim, std::size_t num_classes, std::size_t latent_dim,
                                   NetworkSpecs networks, ParameterSet params);
    void validate() const;
    const MlpSpec& net(const std::string& name) const;
};

struct SemiVaeVars {
    Var labeled_u, marginal_u, entropy, classifier_loglik, reconstruction, total;
    SemiVaeTerms values() const;
};

/// Evaluates U(x, c) for every class with one draw each. noise is (C*B x D),
/// class-major: rows [c*B, (c+1)*B) feed class c. U(x, y) reuses the draw of class y.
SemiVaeVars semivae_elbo(const SemiVaeModel& m, const BoundParameters& bound, Var x,
                         std::span<const std::size_t> labels, double alpha, Var noise);
SemiVaeTerms semivae_elbo(const SemiVaeModel& m, const Tensor& x, std::span<const std::size_t> labels, double alpha,
                          const Tensor& noise);

struct SemiVaeEvaluation {
    SemiVaeTerms terms;
    Gradients total_gradient;
};
SemiVaeEvaluation semivae_elbo_gradient(const SemiVaeModel& m, const Tensor& x, std::span<const std::size_t> labels,
                                        double alpha, const Tensor& noise);

Categorical semivae_classify(const SemiVaeModel& m, std::span<const double> x);
Tensor semivae_classify_batch(const SemiVaeModel& m, const Tensor& x);

/// Rejects images of the wrong length or with pixels outside [0, 1].
void check_image(std::span<const double> x, std::size_t input_dim);

}  // namespace svae
