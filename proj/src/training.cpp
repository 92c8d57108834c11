#include "svae/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>

#include "svae/csv.hpp"
#include "svae/errors.hpp"

namespace svae {

using nlohmann::json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'S', 'V', 'A', 'E'};

// Rng stream tags.
constexpr std::uint64_t kInitStream = 1, kNoiseStream = 2, kValidStream = 3, kEvalStream = 4;

constexpr std::size_t kEvalChunk = 256;

std::size_t argmax_row(const Tensor& probs, std::size_t r) {
    const auto row = probs.row_span(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void check_finite(double v, const char* term, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(v)) {
        throw NonFiniteError(std::string("non-finite ") + term + " at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(b[at + i]) << (8 * i);
    return v;
}

json metrics_to_json(const EpochMetrics& m) {
    return {{"epoch", m.epoch},
            {"total", m.total},
            {"reconstruction", m.reconstruction},
            {"regularization_kl", m.regularization_kl},
            {"sufficiency_kl", m.sufficiency_kl},
            {"labeled_u", m.labeled_u},
            {"marginal_u", m.marginal_u},
            {"entropy", m.entropy},
            {"classifier_loglik", m.classifier_loglik},
            {"valid_accuracy", m.valid_accuracy}};
}

EpochMetrics metrics_from_json(const json& j) {
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.total = j.at("total").get<double>();
    m.reconstruction = j.at("reconstruction").get<double>();
    m.regularization_kl = j.at("regularization_kl").get<double>();
    m.sufficiency_kl = j.at("sufficiency_kl").get<double>();
    m.labeled_u = j.at("labeled_u").get<double>();
    m.marginal_u = j.at("marginal_u").get<double>();
    m.entropy = j.at("entropy").get<double>();
    m.classifier_loglik = j.at("classifier_loglik").get<double>();
    m.valid_accuracy = j.at("valid_accuracy").get<double>();
    return m;
}

Tensor normal_noise(Rng& rng, std::size_t rows, std::size_t latent) {
    Tensor t = Tensor::zeros({rows, latent});
    rng.fill_normal(t.values());
    return t;
}

}  // namespace

NetworkSpecs TrainConfig::networks() const {
    return make_network_specs(model_kind, input_dim(), num_classes, split, architecture);
}

void TrainConfig::validate() const {
    if (model_kind == ModelKind::svae) {
        check_svae_hyperparameters(beta, alpha);
    } else if (!(alpha > 0.0)) {
        throw ConfigError("alpha must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (n_classify_samples == 0) throw ConfigError("classification needs at least one Monte Carlo sample");
    split.validate();
    if (architecture.encoder_hidden.empty()) throw ConfigError("encoder needs at least one hidden layer");
    for (std::size_t w : architecture.encoder_hidden)
        if (w == 0) throw ConfigError("hidden widths must be positive");
    for (std::size_t w : architecture.classifier_hidden)
        if (w == 0) throw ConfigError("hidden widths must be positive");
    if (num_classes < 2) throw ConfigError("need at least two classes");
    if (height == 0 || width == 0) throw ConfigError("image shape must be positive");
}

json to_json(const TrainConfig& c) {
    return {{"model_kind", to_string(c.model_kind)},
            {"beta", c.beta},
            {"alpha", c.alpha},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"split", {{"d1", c.split.d1}, {"d2", c.split.d2}}},
            {"architecture",
             {{"encoder_hidden", c.architecture.encoder_hidden},
              {"classifier_hidden", c.architecture.classifier_hidden},
              {"activation", to_string(c.architecture.activation)}}},
            {"n_classify_samples", c.n_classify_samples},
            {"num_classes", c.num_classes},
            {"image_shape", {c.height, c.width}}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    try {
        c.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
        c.beta = j.at("beta").get<double>();
        c.alpha = j.at("alpha").get<double>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.split.d1 = j.at("split").at("d1").get<std::size_t>();
        c.split.d2 = j.at("split").at("d2").get<std::size_t>();
        const json& a = j.at("architecture");
        c.architecture.encoder_hidden = a.at("encoder_hidden").get<std::vector<std::size_t>>();
        c.architecture.classifier_hidden = a.at("classifier_hidden").get<std::vector<std::size_t>>();
        c.architecture.activation = parse_activation(a.at("activation").get<std::string>());
        c.n_classify_samples = j.at("n_classify_samples").get<std::size_t>();
        c.num_classes = j.at("num_classes").get<std::size_t>();
        const auto shape = j.at("image_shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) throw FormatError("image_shape must have two entries");
        c.height = shape[0];
        c.width = shape[1];
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed config: ") + e.what());
    }
    return c;
}

SvaeModel Checkpoint::svae() const {
    if (config.model_kind != ModelKind::svae) throw ConfigError("checkpoint holds a SemiVAE, not an SVAE");
    return SvaeModel::from_parts(config.input_dim(), config.num_classes, config.split, config.networks(), params);
}

SemiVaeModel Checkpoint::semivae() const {
    if (config.model_kind != ModelKind::semivae) throw ConfigError("checkpoint holds an SVAE, not a SemiVAE");
    return SemiVaeModel::from_parts(config.input_dim(), config.num_classes, config.split.total(), config.networks(),
                                    params);
}

void Checkpoint::validate() const {
    config.validate();
    std::size_t expected = 0;
    for (const auto& [name, spec] : config.networks()) expected += 2 * spec.num_layers();
    if (params.size() != expected) {
        throw ContractError("checkpoint has " + std::to_string(params.size()) + " tensors, architecture needs " +
                            std::to_string(expected));
    }
    if (config.model_kind == ModelKind::svae) {
        (void)svae();
    } else {
        (void)semivae();
    }
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
    config.validate();
    Checkpoint c;
    c.config = config;
    Rng rng = Rng::derive(config.seed, kInitStream);
    for (const auto& [name, spec] : config.networks()) init_mlp(c.params, name, spec, rng, true);
    c.validate();
    return c;
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, double lr) {
    for (const auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw ContractError("no gradient for parameter " + name);
        if (g->second.shape() != p.shape()) throw DimensionError("gradient shape mismatch for " + name);
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor::zeros(p.shape()));
        auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor::zeros(p.shape()));
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        if (m.shape() != p.shape() || v.shape() != p.shape()) throw DimensionError("moment shape mismatch for " + name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            p[i] -= lr * mh / (std::sqrt(vh) + state.epsilon);
        }
    }
}

Tensor predict_probabilities(const Checkpoint& c, const Tensor& images, std::size_t n_samples, Rng& rng) {
    if (c.config.model_kind == ModelKind::svae) return classify_batch(c.svae(), images, n_samples, rng);
    return semivae_classify_batch(c.semivae(), images);
}

Checkpoint train(TrainConfig config, const Dataset& train_set, const Dataset& valid_set, const EpochCallback& on_epoch) {
    if (train_set.size() == 0 || valid_set.size() == 0) throw ConfigError("training and validation sets must be non-empty");
    if (config.num_classes == 0) config.num_classes = train_set.num_classes;
    if (config.height == 0 && config.width == 0) {
        config.height = train_set.height;
        config.width = train_set.width;
    }
    if (config.num_classes != train_set.num_classes || config.input_dim() != train_set.input_dim() ||
        valid_set.num_classes != train_set.num_classes || valid_set.input_dim() != train_set.input_dim()) {
        throw DimensionError("datasets do not match the configured image shape or class count");
    }
    Checkpoint ck = initial_checkpoint(config);
    const bool is_svae = config.model_kind == ModelKind::svae;
    const std::size_t d = config.split.total(), c = config.num_classes;
    // Built once: only params change between steps.
    SvaeModel svae_model;
    SemiVaeModel semi_model;
    if (is_svae) {
        svae_model = ck.svae();
    } else {
        semi_model = ck.semivae();
    }
    ParameterSet& params = is_svae ? svae_model.params : semi_model.params;
    AdamState adam;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        EpochMetrics em;
        em.epoch = epoch + 1;
        const auto plan = batches(train_set, config.batch_size, config.seed, epoch);
        for (std::size_t bi = 0; bi < plan.size(); ++bi) {
            const auto& idx = plan[bi];
            const Tensor x = gather_rows(train_set.images, idx);
            std::vector<std::size_t> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[idx[i]];
            Rng rng = Rng::derive(config.seed, kNoiseStream, epoch, bi);
            const double w = static_cast<double>(idx.size()) / static_cast<double>(train_set.size());

            Gradients grads;
            if (is_svae) {
                const Tensor noise = normal_noise(rng, idx.size(), d);
                ElboEvaluation ev = svae_elbo_gradient(svae_model, x, labels, config.beta, config.alpha, noise);
                check_finite(ev.terms.reconstruction, "reconstruction", epoch, bi);
                check_finite(ev.terms.regularization_kl, "regularization_kl", epoch, bi);
                check_finite(ev.terms.sufficiency_kl, "sufficiency_kl", epoch, bi);
                check_finite(ev.terms.classifier_loglik, "classifier_loglik", epoch, bi);
                check_finite(ev.terms.total, "total", epoch, bi);
                em.total += w * ev.terms.total;
                em.reconstruction += w * ev.terms.reconstruction;
                em.regularization_kl += w * ev.terms.regularization_kl;
                em.sufficiency_kl += w * ev.terms.sufficiency_kl;
                em.classifier_loglik += w * ev.terms.classifier_loglik;
                grads = std::move(ev.total_gradient);
            } else {
                const Tensor noise = normal_noise(rng, c * idx.size(), d);
                SemiVaeEvaluation ev = semivae_elbo_gradient(semi_model, x, labels, config.alpha, noise);
                check_finite(ev.terms.labeled_u, "labeled_u", epoch, bi);
                check_finite(ev.terms.marginal_u, "marginal_u", epoch, bi);
                check_finite(ev.terms.entropy, "entropy", epoch, bi);
                check_finite(ev.terms.classifier_loglik, "classifier_loglik", epoch, bi);
                check_finite(ev.terms.total, "total", epoch, bi);
                em.total += w * ev.terms.total;
                em.reconstruction += w * ev.terms.reconstruction;
                em.labeled_u += w * ev.terms.labeled_u;
                em.marginal_u += w * ev.terms.marginal_u;
                em.entropy += w * ev.terms.entropy;
                em.classifier_loglik += w * ev.terms.classifier_loglik;
                grads = std::move(ev.total_gradient);
            }
            // Ascend the ELBO: minimise its negative.
            for (auto& [name, g] : grads)
                for (double& v : g.values()) v = -v;
            adam_step(params, grads, adam, config.learning_rate);
        }
        ck.params = params;
        Rng valid_rng = Rng::derive(config.seed, kValidStream, epoch);
        const Tensor probs = predict_probabilities(ck, valid_set.images, config.n_classify_samples, valid_rng);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < valid_set.size(); ++i) correct += argmax_row(probs, i) == valid_set.labels[i];
        em.valid_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(valid_set.size());
        ck.epoch = epoch + 1;
        ck.history.push_back(em);
        if (on_epoch) on_epoch(em);
    }
    return ck;
}

EvalMetrics evaluate(const Checkpoint& c, const Dataset& test_set, std::size_t n_samples, std::uint64_t seed) {
    if (test_set.size() == 0) throw ConfigError("test set is empty");
    if (test_set.input_dim() != c.config.input_dim()) throw DimensionError("test images do not match the model");
    for (std::size_t y : test_set.labels) {
        if (y >= c.config.num_classes) throw DomainError("test label " + std::to_string(y) + " is out of range");
    }
    EvalMetrics out;
    Rng rng(seed);
    const Tensor probs = predict_probabilities(c, test_set.images, n_samples, rng);
    std::size_t correct = 0;
    out.predictions.resize(test_set.size());
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        out.predictions[i] = argmax_row(probs, i);
        correct += out.predictions[i] == test_set.labels[i];
    }
    out.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(test_set.size());

    const bool is_svae = c.config.model_kind == ModelKind::svae;
    const std::size_t d = c.config.split.total(), nc = c.config.num_classes;
    SvaeModel sm;
    SemiVaeModel qm;
    if (is_svae) {
        sm = c.svae();
    } else {
        qm = c.semivae();
    }
    for (std::size_t begin = 0, chunk = 0; begin < test_set.size(); begin += kEvalChunk, ++chunk) {
        const std::size_t end = std::min(test_set.size(), begin + kEvalChunk);
        const Dataset part = test_set.slice(begin, end);
        Rng noise_rng = Rng::derive(seed, kEvalStream, chunk);
        const double w = static_cast<double>(end - begin) / static_cast<double>(test_set.size());
        if (is_svae) {
            const ElboTerms t = svae_elbo(sm, part.images, part.labels, c.config.beta, c.config.alpha,
                                          normal_noise(noise_rng, end - begin, d));
            out.reconstruction += w * t.reconstruction;
            out.total += w * t.total;
        } else {
            const SemiVaeTerms t =
                semivae_elbo(qm, part.images, part.labels, c.config.alpha, normal_noise(noise_rng, nc * (end - begin), d));
            out.reconstruction += w * t.reconstruction;
            out.total += w * t.total;
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    json index = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : c.params) {
        const std::uint64_t len = t.size() * sizeof(double);
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", len}});
        offset += len;
    }
    json networks = json::object();
    for (const auto& [name, spec] : c.config.networks()) {
        networks[name] = {{"layer_widths", spec.layer_widths},
                          {"hidden_activation", to_string(spec.hidden_activation)},
                          {"output_activation", to_string(spec.output_activation)}};
    }
    json history = json::array();
    for (const auto& m : c.history) history.push_back(metrics_to_json(m));
    const json header = {{"config", to_json(c.config)},
                         {"networks", networks},
                         {"epoch", c.epoch},
                         {"history", history},
                         {"tensors", index}};
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + offset);
    for (const auto& [name, t] : c.params) {
        for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncatedError("checkpoint is shorter than its magic number");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw MagicError("not a checkpoint file (bad magic)");
    if (bytes.size() < 16) throw TruncatedError("checkpoint preamble is truncated");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t header_len = get_le(bytes, 8, 8);
    if (header_len > bytes.size() - 16) throw TruncatedError("checkpoint header is truncated");
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    const std::span<const std::uint8_t> blob = bytes.subspan(16 + header_len);

    Checkpoint c;
    c.config = config_from_json(header.at("config"));
    try {
        c.epoch = header.at("epoch").get<std::size_t>();
        for (const json& m : header.at("history")) c.history.push_back(metrics_from_json(m));
        for (const json& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto off = entry.at("offset").get<std::uint64_t>();
            const auto len = entry.at("length").get<std::uint64_t>();
            if (len != shape_size(shape) * sizeof(double)) {
                throw FormatError("tensor " + name + " length does not match its shape");
            }
            if (off > blob.size() || len > blob.size() - off) {
                throw TruncatedError("tensor blob for " + name + " is truncated");
            }
            std::vector<double> values(len / sizeof(double));
            for (std::size_t i = 0; i < values.size(); ++i) {
                values[i] = std::bit_cast<double>(get_le(blob, off + i * sizeof(double), 8));
            }
            if (!c.params.emplace(name, Tensor(shape, std::move(values))).second) {
                throw FormatError("tensor " + name + " appears twice");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint header: ") + e.what());
    }
    c.validate();
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, ModelKind kind, std::ostream& out) {
    if (kind == ModelKind::svae) {
        out << "epoch,total,reconstruction,regularization_kl,sufficiency_kl,classifier_loglik,valid_accuracy\n";
        for (const auto& m : history) {
            const double row[] = {double(m.epoch),    m.total,          m.reconstruction,   m.regularization_kl,
                                  m.sufficiency_kl, m.classifier_loglik, m.valid_accuracy};
            write_csv_row(out, row);
        }
    } else {
        out << "epoch,total,labeled_u,marginal_u,entropy,reconstruction,classifier_loglik,valid_accuracy\n";
        for (const auto& m : history) {
            const double row[] = {double(m.epoch), m.total,          m.labeled_u,         m.marginal_u,
                                  m.entropy,       m.reconstruction, m.classifier_loglik, m.valid_accuracy};
            write_csv_row(out, row);
        }
    }
}

}  // namespace svae
