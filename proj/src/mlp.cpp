#include "svae/mlp.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        case Activation::tanh: return "tanh";
    }
    return "relu";
}

std::string to_string(OutputActivation a) {
    switch (a) {
        case OutputActivation::identity: return "identity";
        case OutputActivation::sigmoid: return "sigmoid";
        case OutputActivation::softmax_logits: return "softmax-logits";
    }
    return "identity";
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown hidden activation '" + s + "'");
}

OutputActivation parse_output_activation(const std::string& s) {
    if (s == "identity") return OutputActivation::identity;
    if (s == "sigmoid") return OutputActivation::sigmoid;
    if (s == "softmax-logits") return OutputActivation::softmax_logits;
    throw ConfigError("unknown output activation '" + s + "'");
}

void MlpSpec::validate() const {
    if (layer_widths.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
    for (auto w : layer_widths) {
        if (w == 0) throw ConfigError("MLP widths must be positive");
    }
}

std::string weight_name(const std::string& prefix, std::size_t layer) {
    return prefix + "." + std::to_string(layer) + ".weight";
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
    return prefix + "." + std::to_string(layer) + ".bias";
}

void init_mlp(ParameterSet& params, const std::string& prefix, const MlpSpec& spec, Rng& rng,
              bool zero_final_layer) {
    spec.validate();
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
        Tensor w = Tensor::zeros({in, out});
        if (!(zero_final_layer && l + 1 == spec.num_layers())) {
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            for (double& v : w.values()) v = limit * (2.0 * rng.uniform() - 1.0);
        }
        params.insert_or_assign(weight_name(prefix, l), std::move(w));
        params.insert_or_assign(bias_name(prefix, l), Tensor::zeros({1, out}));
    }
}

MlpVars mlp_vars(const BoundParameters& bound, const std::string& prefix, const MlpSpec& spec) {
    MlpVars vars;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        auto w = bound.find(weight_name(prefix, l));
        auto b = bound.find(bias_name(prefix, l));
        if (w == bound.end() || b == bound.end()) {
            throw ContractError("missing parameters for " + prefix + " layer " + std::to_string(l));
        }
        if (w->second.value().rows() != spec.layer_widths[l] || w->second.value().cols() != spec.layer_widths[l + 1]) {
            throw DimensionError(prefix + " layer " + std::to_string(l) + ": weight shape " +
                                 shape_string(w->second.value().shape()) + " does not match the architecture");
        }
        vars.weights.push_back(w->second);
        vars.biases.push_back(b->second);
    }
    return vars;
}

namespace {

Var activate_hidden(Activation a, Var h) {
    switch (a) {
        case Activation::relu: return relu(h);
        case Activation::softplus: return softplus(h);
        case Activation::tanh: return tanh(h);
    }
    return h;
}

Var activate_output(OutputActivation a, Var h) {
    return a == OutputActivation::sigmoid ? sigmoid(h) : h;
}

}  // namespace

Var first_layer_partial(const MlpSpec& spec, const MlpVars& vars, Var part, std::size_t row_offset) {
    const std::size_t width = part.cols();
    if (row_offset + width > spec.input_width()) {
        throw DimensionError("layer 0: input block of width " + std::to_string(width) + " at offset " +
                             std::to_string(row_offset) + " exceeds input width " +
                             std::to_string(spec.input_width()));
    }
    Var w = vars.weights.front();
    if (row_offset != 0 || width != spec.input_width()) w = slice_rows(w, row_offset, row_offset + width);
    return matmul(part, w);
}

Var finish_forward(const MlpSpec& spec, const MlpVars& vars, Var first_preactivation) {
    Var h = first_preactivation + vars.biases.front();
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        if (l > 0) h = matmul(h, vars.weights[l]) + vars.biases[l];
        h = l + 1 < spec.num_layers() ? activate_hidden(spec.hidden_activation, h)
                                      : activate_output(spec.output_activation, h);
    }
    return h;
}

Var forward(const MlpSpec& spec, const MlpVars& vars, Var input) {
    if (input.cols() != spec.input_width()) {
        throw DimensionError("layer 0: input width " + std::to_string(input.cols()) + " but the network expects " +
                             std::to_string(spec.input_width()));
    }
    return finish_forward(spec, vars, first_layer_partial(spec, vars, input, 0));
}

Var forward_concat(const MlpSpec& spec, const MlpVars& vars, std::span<const Var> parts) {
    std::size_t total = 0;
    for (const Var& p : parts) total += p.cols();
    if (parts.empty() || total != spec.input_width()) {
        throw DimensionError("layer 0: concatenated input width " + std::to_string(total) +
                             " but the network expects " + std::to_string(spec.input_width()));
    }
    std::size_t offset = 0;
    Var pre;
    for (const Var& p : parts) {
        Var contrib = first_layer_partial(spec, vars, p, offset);
        pre = pre.valid() ? pre + contrib : contrib;
        offset += p.cols();
    }
    return finish_forward(spec, vars, pre);
}

}  // namespace svae
