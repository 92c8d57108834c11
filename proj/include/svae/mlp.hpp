#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svae/autodiff.hpp"
#include "svae/rng.hpp"

namespace svae {

enum class Activation { relu, softplus, tanh };
enum class OutputActivation { identity, sigmoid, softmax_logits };

std::string to_string(Activation a);
std::string to_string(OutputActivation a);
Activation parse_activation(const std::string& s);
OutputActivation parse_output_activation(const std::string& s);

/// Fully connected network layout: widths[0] inputs, widths.back() outputs.
struct MlpSpec {
    std::vector<std::size_t> layer_widths;
    Activation hidden_activation = Activation::relu;
    OutputActivation output_activation = OutputActivation::identity;

    std::size_t input_width() const { return layer_widths.front(); }
    std::size_t output_width() const { return layer_widths.back(); }
    std::size_t num_layers() const { return layer_widths.size() - 1; }
    void validate() const;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

std::string weight_name(const std::string& prefix, std::size_t layer);
std::string bias_name(const std::string& prefix, std::size_t layer);

/// Adds `prefix.<l>.weight` (in x out) and `prefix.<l>.bias` (1 x out) for every layer.
/// Weights are Glorot-uniform, biases zero. With zero_final_layer the last
/// affine map starts at zero so the network initially outputs exactly 0.
void init_mlp(ParameterSet& params, const std::string& prefix, const MlpSpec& spec, Rng& rng,
              bool zero_final_layer = true);

/// Tape handles for one network's weights and biases.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

MlpVars mlp_vars(const BoundParameters& bound, const std::string& prefix, const MlpSpec& spec);

/// Applies the network to a (batch x widths[0]) input.
Var forward(const MlpSpec& spec, const MlpVars& vars, Var input);

/// Same as forward() on the column-wise concatenation of `parts`, without
/// materialising the concatenated input.
Var forward_concat(const MlpSpec& spec, const MlpVars& vars, std::span<const Var> parts);

/// First-layer contribution of an input block occupying rows
/// [row_offset, row_offset + part.cols()) of the first weight matrix.
Var first_layer_partial(const MlpSpec& spec, const MlpVars& vars, Var part, std::size_t row_offset);

/// Adds the first bias to a first-layer pre-activation and runs the remaining layers.
Var finish_forward(const MlpSpec& spec, const MlpVars& vars, Var first_preactivation);

}  // namespace svae
