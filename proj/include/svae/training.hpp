#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "svae/data.hpp"
#include "svae/models.hpp"

namespace svae {

struct TrainConfig {
    ModelKind model_kind = ModelKind::svae;
    double beta = 0.9;  // SVAE only
    double alpha = 1.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 100;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    LatentSplit split;
    ArchitectureOptions architecture;
    std::size_t n_classify_samples = 32;

    // Data layout the model is built for; filled from the training set when zero.
    std::size_t num_classes = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t input_dim() const { return height * width; }
    NetworkSpecs networks() const;
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);

/// Per-epoch record. SVAE runs fill the four ELBO terms; SemiVAE runs fill
/// labeled_u, marginal_u and entropy. Training terms are batch averages.
struct EpochMetrics {
    std::size_t epoch = 0;
    double total = 0.0;
    double reconstruction = 0.0;
    double regularization_kl = 0.0;
    double sufficiency_kl = 0.0;
    double labeled_u = 0.0;
    double marginal_u = 0.0;
    double entropy = 0.0;
    double classifier_loglik = 0.0;
    double valid_accuracy = 0.0;  // percent

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct Checkpoint {
    TrainConfig config;
    ParameterSet params;
    std::size_t epoch = 0;
    std::vector<EpochMetrics> history;

    SvaeModel svae() const;
    SemiVaeModel semivae() const;
    void validate() const;
};

/// Fresh, untrained parameters for config (deterministic in config.seed).
Checkpoint initial_checkpoint(const TrainConfig& config);

struct AdamState {
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One Adam descent step on `grads` (gradients of the loss being minimised).
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, double lr);

using EpochCallback = std::function<void(const EpochMetrics&)>;

Checkpoint train(TrainConfig config, const Dataset& train_set, const Dataset& valid_set,
                 const EpochCallback& on_epoch = {});

struct EvalMetrics {
    double accuracy = 0.0;        // percent
    double reconstruction = 0.0;  // mean log p(x|z), one posterior draw per image
    double total = 0.0;           // mean ELBO total
    std::vector<std::size_t> predictions;
};

/// Classification accuracy plus one-draw ELBO terms. seed fixes all noise.
EvalMetrics evaluate(const Checkpoint& c, const Dataset& test_set, std::size_t n_samples, std::uint64_t seed = 0);

/// Class probabilities (N x C) from the checkpoint's classifier.
Tensor predict_probabilities(const Checkpoint& c, const Tensor& images, std::size_t n_samples, Rng& rng);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void write_metrics_csv(const std::vector<EpochMetrics>& history, ModelKind kind, std::ostream& out);

}  // namespace svae
