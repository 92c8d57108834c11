#include "svae/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svae/errors.hpp"

namespace svae {

void LatentSplit::validate() const {
    if (d1 == 0 || d2 == 0) throw ConfigError("latent split needs d1 >= 1 and d2 >= 1");
}

std::string to_string(ModelKind k) { return k == ModelKind::svae ? "svae" : "semivae"; }

ModelKind parse_model_kind(const std::string& s) {
    if (s == "svae") return ModelKind::svae;
    if (s == "semivae") return ModelKind::semivae;
    throw ConfigError("unknown model kind '" + s + "' (expected svae or semivae)");
}

namespace {

MlpSpec chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation act,
              OutputActivation out_act) {
    MlpSpec spec;
    spec.layer_widths.push_back(in);
    spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
    spec.layer_widths.push_back(out);
    spec.hidden_activation = act;
    spec.output_activation = out_act;
    return spec;
}

const MlpSpec& lookup(const NetworkSpecs& networks, const std::string& name) {
    auto it = networks.find(name);
    if (it == networks.end()) throw ConfigError("architecture has no network named '" + name + "'");
    return it->second;
}

void check_params(const ParameterSet& params, const NetworkSpecs& networks) {
    for (const auto& [name, spec] : networks) {
        spec.validate();
        for (std::size_t l = 0; l < spec.num_layers(); ++l) {
            auto w = params.find(weight_name(name, l));
            auto b = params.find(bias_name(name, l));
            if (w == params.end() || b == params.end()) {
                throw ContractError("missing parameters for " + name + " layer " + std::to_string(l));
            }
            const Shape ws{spec.layer_widths[l], spec.layer_widths[l + 1]};
            const Shape bs{1, spec.layer_widths[l + 1]};
            if (w->second.shape() != ws || b->second.shape() != bs) {
                throw DimensionError(name + " layer " + std::to_string(l) + ": parameter shapes " +
                                     shape_string(w->second.shape()) + "/" + shape_string(b->second.shape()) +
                                     " do not match the architecture");
            }
        }
    }
}

void expect_widths(const MlpSpec& spec, const std::string& name, std::size_t in, std::size_t out) {
    if (spec.input_width() != in || spec.output_width() != out) {
        throw DimensionError(name + " must map " + std::to_string(in) + " -> " + std::to_string(out) + " but maps " +
                             std::to_string(spec.input_width()) + " -> " + std::to_string(spec.output_width()));
    }
}

GaussianVars split_gaussian(Var h, std::size_t dim) {
    return {slice_cols(h, 0, dim), slice_cols(h, dim, 2 * dim)};
}

Tensor image_row(std::span<const double> x, std::size_t input_dim) {
    check_image(x, input_dim);
    return Tensor::row(x);
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Rows [begin, end) of a matrix as a new tensor.
Tensor take_rows(const Tensor& t, std::size_t begin, std::size_t end) {
    const std::size_t cols = t.cols();
    std::vector<double> v(t.data() + begin * cols, t.data() + end * cols);
    return Tensor({end - begin, cols}, std::move(v));
}

constexpr std::size_t kInferenceChunk = 256;

}  // namespace

NetworkSpecs make_network_specs(ModelKind kind, std::size_t input_dim, std::size_t num_classes,
                                const LatentSplit& split, const ArchitectureOptions& options) {
    split.validate();
    if (input_dim == 0 || num_classes < 2) throw ConfigError("need a positive input width and at least 2 classes");
    const std::size_t d = split.total();
    std::vector<std::size_t> reversed(options.encoder_hidden.rbegin(), options.encoder_hidden.rend());
    const auto act = options.activation;
    NetworkSpecs nets;
    if (kind == ModelKind::svae) {
        nets["enc_x"] = chain(input_dim, options.encoder_hidden, 2 * d, act, OutputActivation::identity);
        nets["enc_xy"] = chain(input_dim + num_classes, options.encoder_hidden, 2 * d, act, OutputActivation::identity);
        nets["dec"] = chain(d, reversed, input_dim, act, OutputActivation::identity);
        nets["cls"] = chain(split.d1, options.classifier_hidden, num_classes, act, OutputActivation::softmax_logits);
    } else {
        nets["enc"] = chain(input_dim + num_classes, options.encoder_hidden, 2 * d, act, OutputActivation::identity);
        nets["dec"] = chain(d + num_classes, reversed, input_dim, act, OutputActivation::identity);
        nets["cls"] = chain(input_dim, options.encoder_hidden, num_classes, act, OutputActivation::softmax_logits);
    }
    return nets;
}

DiagonalGaussian GaussianBatch::row(std::size_t r) const {
    DiagonalGaussian g;
    const auto m = mean.row_span(r);
    const auto ls = log_std.row_span(r);
    g.mean.assign(m.begin(), m.end());
    g.std.resize(ls.size());
    std::transform(ls.begin(), ls.end(), g.std.begin(), [](double v) { return std::exp(v); });
    return g;
}

void check_image(std::span<const double> x, std::size_t input_dim) {
    if (x.size() != input_dim) {
        throw DimensionError("image has " + std::to_string(x.size()) + " pixels, model expects " +
                             std::to_string(input_dim));
    }
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("pixel values must lie in [0, 1]");
    }
}

void check_svae_hyperparameters(double beta, double alpha) {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1), got " + std::to_string(beta));
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive, got " + std::to_string(alpha));
}

// ---------------------------------------------------------------------------
// SVAE

SvaeModel SvaeModel::create(std::size_t input_dim, std::size_t num_classes, const LatentSplit& split,
                            const ArchitectureOptions& options, std::uint64_t seed, bool zero_final_layer) {
    SvaeModel m;
    m.split = split;
    m.num_classes = num_classes;
    m.input_dim = input_dim;
    m.networks = make_network_specs(ModelKind::svae, input_dim, num_classes, split, options);
    Rng rng(seed);
    for (const auto& [name, spec] : m.networks) init_mlp(m.params, name, spec, rng, zero_final_layer);
    m.validate();
    return m;
}

SvaeModel SvaeModel::from_parts(std::size_t input_dim, std::size_t num_classes, const LatentSplit& split,
                                NetworkSpecs networks, ParameterSet params) {
    SvaeModel m;
    m.split = split;
    m.num_classes = num_classes;
    m.input_dim = input_dim;
    m.networks = std::move(networks);
    m.params = std::move(params);
    m.validate();
    return m;
}

const MlpSpec& SvaeModel::net(const std::string& name) const { return lookup(networks, name); }

void SvaeModel::validate() const {
    split.validate();
    const std::size_t d = split.total();
    expect_widths(net("enc_x"), "enc_x", input_dim, 2 * d);
    expect_widths(net("enc_xy"), "enc_xy", input_dim + num_classes, 2 * d);
    expect_widths(net("dec"), "dec", d, input_dim);
    if (net("cls").input_width() != split.d1) {
        throw LatentSplitError("the latent classifier must read exactly d1 = " + std::to_string(split.d1) +
                               " dimensions, its input width is " + std::to_string(net("cls").input_width()));
    }
    expect_widths(net("cls"), "cls", split.d1, num_classes);
    check_params(params, networks);
}

SvaeGraph::SvaeGraph(const SvaeModel& model, const BoundParameters& bound)
    : model_(model),
      enc_x_(mlp_vars(bound, "enc_x", model.net("enc_x"))),
      enc_xy_(mlp_vars(bound, "enc_xy", model.net("enc_xy"))),
      dec_(mlp_vars(bound, "dec", model.net("dec"))),
      cls_(mlp_vars(bound, "cls", model.net("cls"))) {}

GaussianVars SvaeGraph::encode_x(Var x) const {
    return split_gaussian(forward(model_.net("enc_x"), enc_x_, x), model_.split.total());
}

GaussianVars SvaeGraph::encode_xy(Var x, Var y_one_hot) const {
    const Var parts[] = {x, y_one_hot};
    return split_gaussian(forward_concat(model_.net("enc_xy"), enc_xy_, parts), model_.split.total());
}

Var SvaeGraph::decode(Var z) const {
    if (z.cols() != model_.split.total()) {
        throw DimensionError("decoder expects " + std::to_string(model_.split.total()) + " latent dimensions, got " +
                             std::to_string(z.cols()));
    }
    return forward(model_.net("dec"), dec_, z);
}

Var SvaeGraph::classify_latent(Var z1) const {
    if (z1.cols() != model_.split.d1) {
        throw LatentSplitError("latent classifier reads only the " + std::to_string(model_.split.d1) +
                               " classifier dimensions, got " + std::to_string(z1.cols()) + " columns");
    }
    return forward(model_.net("cls"), cls_, z1);
}

ElboTerms ElboVars::values() const {
    return {reconstruction.value().item(), regularization_kl.value().item(), sufficiency_kl.value().item(),
            classifier_loglik.value().item(), total.value().item()};
}

ElboVars svae_elbo(const SvaeGraph& graph, Var x, std::span<const std::size_t> labels, double beta, double alpha,
                   Var noise) {
    check_svae_hyperparameters(beta, alpha);
    const SvaeModel& m = graph.model();
    if (labels.size() != x.rows()) throw DimensionError("one label per image is required");
    Tape& tape = x.tape();
    Var y = tape.constant(one_hot(labels, m.num_classes));

    const GaussianVars q_xy = graph.encode_xy(x, y);
    const GaussianVars q_x = graph.encode_x(x);
    Var z = reparam_sample(q_xy, noise);

    ElboVars e;
    e.reconstruction = mean(bernoulli_log_likelihood(graph.decode(z), x));
    e.regularization_kl = mean(kl_to_standard_normal(q_xy));
    e.sufficiency_kl = mean(kl_diag_gaussians(q_xy, q_x));
    e.classifier_loglik = mean(categorical_log_prob(graph.classify_latent(slice_cols(z, 0, m.split.d1)), labels));
    e.total = beta * e.reconstruction - beta * e.regularization_kl - (1.0 - beta) * e.sufficiency_kl +
              alpha * e.classifier_loglik;
    return e;
}

DiagonalGaussian encode_x(const SvaeModel& m, std::span<const double> x) {
    return encode_x_batch(m, image_row(x, m.input_dim)).row(0);
}

DiagonalGaussian encode_xy(const SvaeModel& m, std::span<const double> x, std::size_t y) {
    Tensor xt = image_row(x, m.input_dim);
    const std::size_t labels[] = {y};
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    Var xv = tape.constant(std::move(xt));
    const GaussianVars q = g.encode_xy(xv, tape.constant(one_hot(labels, m.num_classes)));
    return GaussianBatch{q.mean.value(), q.log_std.value()}.row(0);
}

std::vector<double> decode(const SvaeModel& m, std::span<const double> z) {
    if (z.size() != m.split.total()) {
        throw DimensionError("decoder expects " + std::to_string(m.split.total()) + " latent dimensions, got " +
                             std::to_string(z.size()));
    }
    return to_vector(decode_batch(m, Tensor::row(z)));
}

Categorical classify_latent(const SvaeModel& m, std::span<const double> z1) {
    if (z1.size() != m.split.d1) {
        throw LatentSplitError("latent classifier reads only the " + std::to_string(m.split.d1) +
                               " classifier dimensions, got " + std::to_string(z1.size()));
    }
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    return {to_vector(g.classify_latent(tape.constant(Tensor::row(z1))).value())};
}

ElboTerms svae_elbo(const SvaeModel& m, const Tensor& x, std::span<const std::size_t> labels, double beta,
                    double alpha, const Tensor& noise) {
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    return svae_elbo(g, tape.constant(x), labels, beta, alpha, tape.constant(noise)).values();
}

ElboEvaluation svae_elbo_gradient(const SvaeModel& m, const Tensor& x, std::span<const std::size_t> labels,
                                  double beta, double alpha, const Tensor& noise) {
    Tape tape;
    SvaeGraph g(m, tape.bind(m.params));
    ElboVars e = svae_elbo(g, tape.constant(x), labels, beta, alpha, tape.constant(noise));
    ElboEvaluation out;
    out.terms = e.values();
    out.total_gradient = tape.backward(e.total);
    return out;
}

GaussianBatch encode_x_batch(const SvaeModel& m, const Tensor& x) {
    if (x.cols() != m.input_dim) {
        throw DimensionError("images have " + std::to_string(x.cols()) + " pixels, model expects " +
                             std::to_string(m.input_dim));
    }
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    const GaussianVars q = g.encode_x(tape.constant(x.reshaped({x.rows(), x.cols()})));
    return {q.mean.value(), q.log_std.value()};
}

Tensor decode_batch(const SvaeModel& m, const Tensor& z) {
    Tape tape;
    SvaeGraph g(m, tape.bind_constants(m.params));
    return g.decode(tape.constant(z.reshaped({z.rows(), z.cols()}))).value();
}

Tensor classify_batch(const SvaeModel& m, const Tensor& x, std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw ConfigError("classify needs at least one Monte Carlo sample");
    const std::size_t d1 = m.split.d1, c = m.num_classes, n = x.rows();
    Tensor noise = Tensor::zeros({n_samples, d1});
    rng.fill_normal(noise.values());

    Tensor probs = Tensor::zeros({n, c});
    for (std::size_t begin = 0; begin < n; begin += kInferenceChunk) {
        const std::size_t end = std::min(n, begin + kInferenceChunk), rows = end - begin;
        const GaussianBatch q = encode_x_batch(m, take_rows(x, begin, end));
        const std::size_t dz = q.mean.cols();
        // Row s*rows + b holds draw s for image b.
        Tensor z1 = Tensor::zeros({n_samples * rows, d1});
        for (std::size_t s = 0; s < n_samples; ++s) {
            for (std::size_t b = 0; b < rows; ++b) {
                for (std::size_t j = 0; j < d1; ++j) {
                    z1.at(s * rows + b, j) =
                        q.mean[b * dz + j] + std::exp(q.log_std[b * dz + j]) * noise.at(s, j);
                }
            }
        }
        Tape tape;
        SvaeGraph g(m, tape.bind_constants(m.params));
        const Tensor logp = log_softmax(g.classify_latent(tape.constant(std::move(z1)))).value();
        for (std::size_t b = 0; b < rows; ++b) {
            for (std::size_t k = 0; k < c; ++k) {
                double acc = 0.0;
                for (std::size_t s = 0; s < n_samples; ++s) acc += std::exp(logp.at(s * rows + b, k));
                probs.at(begin + b, k) = acc / static_cast<double>(n_samples);
            }
        }
    }
    return probs;
}

Categorical classify(const SvaeModel& m, std::span<const double> x, std::size_t n_samples, Rng& rng) {
    const Tensor p = classify_batch(m, image_row(x, m.input_dim), n_samples, rng);
    Categorical out;
    out.logits.resize(m.num_classes);
    for (std::size_t k = 0; k < m.num_classes; ++k) {
        out.logits[k] = std::log(std::max(p[k], std::numeric_limits<double>::min()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SemiVAE

SemiVaeModel SemiVaeModel::create(std::size_t input_dim, std::size_t num_classes, std::size_t latent_dim,
                                  const ArchitectureOptions& options, std::uint64_t seed, bool zero_final_layer) {
    if (latent_dim < 2) throw ConfigError("SemiVAE latent dimension must be at least 2");
    SemiVaeModel m;
    m.latent_dim = latent_dim;
    m.num_classes = num_classes;
    m.input_dim = input_dim;
    // The split only fixes the total latent width here.
    m.networks = make_network_specs(ModelKind::semivae, input_dim, num_classes, LatentSplit{1, latent_dim - 1},
                                    options);
    Rng rng(seed);
    for (const auto& [name, spec] : m.networks) init_mlp(m.params, name, spec, rng, zero_final_layer);
    m.validate();
    return m;
}

SemiVaeModel SemiVaeModel::from_parts(std::size_t input_dim, std::size_t num_classes, std::size_t latent_dim,
                                      NetworkSpecs networks, ParameterSet params) {
    SemiVaeModel m;
    m.latent_dim = latent_dim;
    m.num_classes = num_classes;
    m.input_dim = input_dim;
    m.networks = std::move(networks);
    m.params = std::move(params);
    m.validate();
    return m;
}

const MlpSpec& SemiVaeModel::net(const std::string& name) const { return lookup(networks, name); }

void SemiVaeModel::validate() const {
    expect_widths(net("enc"), "enc", input_dim + num_classes, 2 * latent_dim);
    expect_widths(net("dec"), "dec", latent_dim + num_classes, input_dim);
    expect_widths(net("cls"), "cls", input_dim, num_classes);
    check_params(params, networks);
}

SemiVaeTerms SemiVaeVars::values() const {
    return {labeled_u.value().item(),         marginal_u.value().item(),     entropy.value().item(),
            classifier_loglik.value().item(), reconstruction.value().item(), total.value().item()};
}

SemiVaeVars semivae_elbo(const SemiVaeModel& m, const BoundParameters& bound, Var x,
                         std::span<const std::size_t> labels, double alpha, Var noise) {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive, got " + std::to_string(alpha));
    const std::size_t b = x.rows(), c = m.num_classes, d = m.latent_dim, p = m.input_dim;
    if (labels.size() != b) throw DimensionError("one label per image is required");
    if (x.cols() != p) throw DimensionError("images have the wrong number of pixels");
    if (noise.rows() != c * b || noise.cols() != d) {
        throw DimensionError("SemiVAE noise must be (" + std::to_string(c * b) + " x " + std::to_string(d) +
                             "), got " + shape_string(noise.value().shape()));
    }
    Tape& tape = x.tape();
    const MlpSpec& enc = m.net("enc");
    const MlpSpec& dec = m.net("dec");
    const MlpSpec& cls = m.net("cls");
    const MlpVars enc_v = mlp_vars(bound, "enc", enc);
    const MlpVars dec_v = mlp_vars(bound, "dec", dec);
    const MlpVars cls_v = mlp_vars(bound, "cls", cls);

    // Class-major label block: row k*b + i carries class k.
    std::vector<std::size_t> every_class(c * b);
    for (std::size_t k = 0; k < c; ++k) std::fill_n(every_class.begin() + k * b, b, k);
    Var y_all = tape.constant(one_hot(every_class, c));

    // The image part of the first encoder layer is shared by all classes.
    Var enc_pre = tile_rows(first_layer_partial(enc, enc_v, x, 0), c) + first_layer_partial(enc, enc_v, y_all, p);
    const GaussianVars q = split_gaussian(finish_forward(enc, enc_v, enc_pre), d);
    Var z = reparam_sample(q, noise);
    Var dec_pre = first_layer_partial(dec, dec_v, z, 0) + first_layer_partial(dec, dec_v, y_all, d);
    Var logits = finish_forward(dec, dec_v, dec_pre);

    Var rec_all = bernoulli_log_likelihood(logits, tile_rows(x, c));
    Var u_all = rec_all - kl_to_standard_normal(q);

    Var cls_logits = forward(cls, cls_v, x);
    Var q_y = exp(log_softmax(cls_logits));
    Var indicator = tape.constant(one_hot(labels, c));

    Var labeled_u, marginal_u, rec_y;
    for (std::size_t k = 0; k < c; ++k) {
        Var u_k = slice_rows(u_all, k * b, (k + 1) * b);
        Var r_k = slice_rows(rec_all, k * b, (k + 1) * b);
        Var on_k = slice_cols(indicator, k, k + 1);
        Var lu = on_k * u_k;
        Var mu = slice_cols(q_y, k, k + 1) * u_k;
        Var ru = on_k * r_k;
        labeled_u = labeled_u.valid() ? labeled_u + lu : lu;
        marginal_u = marginal_u.valid() ? marginal_u + mu : mu;
        rec_y = rec_y.valid() ? rec_y + ru : ru;
    }

    SemiVaeVars v;
    v.labeled_u = mean(labeled_u);
    v.marginal_u = mean(marginal_u);
    v.entropy = mean(categorical_entropy(cls_logits));
    v.classifier_loglik = mean(categorical_log_prob(cls_logits, labels));
    v.reconstruction = mean(rec_y);
    v.total = v.labeled_u + v.marginal_u + v.entropy + alpha * v.classifier_loglik;
    return v;
}

SemiVaeTerms semivae_elbo(const SemiVaeModel& m, const Tensor& x, std::span<const std::size_t> labels, double alpha,
                          const Tensor& noise) {
    Tape tape;
    const BoundParameters bound = tape.bind_constants(m.params);
    return semivae_elbo(m, bound, tape.constant(x), labels, alpha, tape.constant(noise)).values();
}

SemiVaeEvaluation semivae_elbo_gradient(const SemiVaeModel& m, const Tensor& x, std::span<const std::size_t> labels,
                                        double alpha, const Tensor& noise) {
    Tape tape;
    const BoundParameters bound = tape.bind(m.params);
    SemiVaeVars v = semivae_elbo(m, bound, tape.constant(x), labels, alpha, tape.constant(noise));
    SemiVaeEvaluation out;
    out.terms = v.values();
    out.total_gradient = tape.backward(v.total);
    return out;
}

Tensor semivae_classify_batch(const SemiVaeModel& m, const Tensor& x) {
    if (x.cols() != m.input_dim) throw DimensionError("images have the wrong number of pixels");
    Tensor probs = Tensor::zeros({x.rows(), m.num_classes});
    for (std::size_t begin = 0; begin < x.rows(); begin += kInferenceChunk) {
        const std::size_t end = std::min(x.rows(), begin + kInferenceChunk);
        Tape tape;
        const BoundParameters bound = tape.bind_constants(m.params);
        const MlpVars cls_v = mlp_vars(bound, "cls", m.net("cls"));
        const Tensor logp = log_softmax(forward(m.net("cls"), cls_v, tape.constant(take_rows(x, begin, end)))).value();
        for (std::size_t i = 0; i < logp.size(); ++i) probs[begin * m.num_classes + i] = std::exp(logp[i]);
    }
    return probs;
}

Categorical semivae_classify(const SemiVaeModel& m, std::span<const double> x) {
    Tape tape;
    const BoundParameters bound = tape.bind_constants(m.params);
    const MlpVars cls_v = mlp_vars(bound, "cls", m.net("cls"));
    return {to_vector(forward(m.net("cls"), cls_v, tape.constant(image_row(x, m.input_dim))).value())};
}

}  // namespace svae
