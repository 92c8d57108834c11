#include "svae/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "svae/errors.hpp"

namespace svae {

namespace {

constexpr std::size_t kChunk = 256;

void check_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + " has " + std::to_string(b.size()) + " values, input has " +
                             std::to_string(a.size()));
    }
}

Tensor rows_of(std::span<const double> x, std::size_t n) {
    Tensor t = Tensor::zeros({n, x.size()});
    for (std::size_t r = 0; r < n; ++r) std::copy(x.begin(), x.end(), t.row_span(r).begin());
    return t;
}

}  // namespace

std::string to_string(AttributionMethod m) {
    switch (m) {
        case AttributionMethod::saliency: return "saliency";
        case AttributionMethod::ixg: return "ixg";
        case AttributionMethod::ig: return "ig";
        case AttributionMethod::gradshap: return "gradshap";
    }
    return "?";
}

AttributionMethod parse_attribution_method(const std::string& s) {
    if (s == "saliency") return AttributionMethod::saliency;
    if (s == "ixg") return AttributionMethod::ixg;
    if (s == "ig") return AttributionMethod::ig;
    if (s == "gradshap") return AttributionMethod::gradshap;
    throw ConfigError("unknown attribution method '" + s + "' (expected saliency, ixg, ig or gradshap)");
}

std::string AttributionTarget::to_string() const {
    return kind == Kind::classifier ? "classifier:" + std::to_string(class_index)
                                    : "divergence:k=" + std::to_string(k);
}

AttributionTarget parse_attribution_target(const std::string& s) {
    AttributionTarget t;
    auto number = [&](const std::string& digits) -> std::size_t {
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw ConfigError("malformed attribution target '" + s + "'");
        return std::stoul(digits);
    };
    if (s.rfind("classifier:", 0) == 0) {
        t.kind = AttributionTarget::Kind::classifier;
        t.class_index = number(s.substr(11));
    } else if (s.rfind("divergence:k=", 0) == 0) {
        t.kind = AttributionTarget::Kind::divergence;
        t.k = number(s.substr(13));
        if (t.k != 1 && t.k != 2) throw ConfigError("divergence target needs k = 1 or k = 2");
    } else {
        throw ConfigError("malformed attribution target '" + s + "' (expected classifier:<c> or divergence:k=<1|2>)");
    }
    return t;
}

RowFunction classifier_target(const SvaeModel& m, std::size_t class_index) {
    if (class_index >= m.num_classes) throw DomainError("class " + std::to_string(class_index) + " is out of range");
    return [&m, class_index](Var x) {
        Tape& tape = x.tape();
        SvaeGraph g(m, tape.bind_constants(m.params));
        const GaussianVars q = g.encode_x(x);
        Var logp = log_softmax(g.classify_latent(slice_cols(q.mean, 0, m.split.d1)));
        return slice_cols(logp, class_index, class_index + 1);
    };
}

RowFunction divergence_target(const SvaeModel& m, std::span<const double> x_ref, std::size_t k) {
    if (k != 1 && k != 2) throw ConfigError("divergence target needs k = 1 or k = 2");
    check_image(x_ref, m.input_dim);
    const GaussianBatch ref = encode_x_batch(m, Tensor::row(x_ref));
    const std::size_t begin = k == 1 ? 0 : m.split.d1, end = k == 1 ? m.split.d1 : m.split.total();
    auto mean = std::make_shared<Tensor>(Tensor::row(ref.mean.values().subspan(begin, end - begin)));
    auto log_std = std::make_shared<Tensor>(Tensor::row(ref.log_std.values().subspan(begin, end - begin)));
    return [&m, mean, log_std, begin, end](Var x) {
        Tape& tape = x.tape();
        SvaeGraph g(m, tape.bind_constants(m.params));
        const GaussianVars q = g.encode_x(x).slice(begin, end);
        const std::size_t rows = x.rows();
        const GaussianVars p{tape.constant(rows_of(mean->values(), rows)),
                             tape.constant(rows_of(log_std->values(), rows))};
        return kl_diag_gaussians(p, q);
    };
}

RowFunction make_target(const SvaeModel& m, const AttributionTarget& target, std::span<const double> x_ref) {
    if (target.kind == AttributionTarget::Kind::classifier) return classifier_target(m, target.class_index);
    return divergence_target(m, x_ref, target.k);
}

std::vector<double> evaluate_rows(const RowFunction& f, const Tensor& xs) {
    Tape tape;
    const Tensor out = f(tape.constant(xs)).value();
    if (out.rows() != xs.rows() || out.cols() != 1) throw DimensionError("attribution target must return one value per row");
    return {out.values().begin(), out.values().end()};
}

double evaluate_at(const RowFunction& f, std::span<const double> x) { return evaluate_rows(f, Tensor::row(x))[0]; }

Tensor gradient_rows(const RowFunction& f, const Tensor& xs) {
    Tape tape;
    Var x = tape.variable(xs);
    Var out = f(x);
    if (out.rows() != xs.rows() || out.cols() != 1) throw DimensionError("attribution target must return one value per row");
    tape.backward(sum(out));
    return tape.grad(x);
}

std::vector<double> saliency(const RowFunction& f, std::span<const double> x) {
    const Tensor g = gradient_rows(f, Tensor::row(x));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(g[i]);
    return out;
}

std::vector<double> input_x_gradient(const RowFunction& f, std::span<const double> x) {
    const Tensor g = gradient_rows(f, Tensor::row(x));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * g[i];
    return out;
}

std::vector<double> integrated_gradients(const RowFunction& f, std::span<const double> x,
                                         std::span<const double> baseline, std::size_t steps) {
    check_same_length(x, baseline, "baseline");
    if (steps == 0) throw ConfigError("integrated gradients needs at least one step");
    const std::size_t p = x.size();
    std::vector<double> avg(p, 0.0);
    for (std::size_t begin = 0; begin < steps; begin += kChunk) {
        const std::size_t end = std::min(steps, begin + kChunk);
        Tensor pts = Tensor::zeros({end - begin, p});
        for (std::size_t s = begin; s < end; ++s) {
            const double t = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
            auto row = pts.row_span(s - begin);
            for (std::size_t i = 0; i < p; ++i) row[i] = baseline[i] + t * (x[i] - baseline[i]);
        }
        const Tensor g = gradient_rows(f, pts);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t i = 0; i < p; ++i) avg[i] += g.at(r, i);
    }
    for (std::size_t i = 0; i < p; ++i) avg[i] = (x[i] - baseline[i]) * avg[i] / static_cast<double>(steps);
    return avg;
}

std::vector<double> gradient_shap(const RowFunction& f, std::span<const double> x, const Tensor& baselines,
                                  std::size_t n_samples, double noise_sigma, Rng& rng) {
    if (baselines.empty() || baselines.rows() == 0) throw ConfigError("GradientShap needs at least one baseline");
    if (baselines.cols() != x.size()) throw DimensionError("baselines do not match the input length");
    if (n_samples == 0) throw ConfigError("GradientShap needs at least one sample");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    const std::size_t p = x.size();
    std::vector<double> acc(p, 0.0);
    for (std::size_t begin = 0; begin < n_samples; begin += kChunk) {
        const std::size_t end = std::min(n_samples, begin + kChunk), rows = end - begin;
        Tensor pts = Tensor::zeros({rows, p});
        Tensor diff = Tensor::zeros({rows, p});
        for (std::size_t r = 0; r < rows; ++r) {
            const auto b = baselines.row_span(static_cast<std::size_t>(rng.below(baselines.rows())));
            const double u = rng.uniform();
            for (std::size_t i = 0; i < p; ++i) {
                const double eps = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
                diff.at(r, i) = x[i] - b[i];
                pts.at(r, i) = b[i] + u * diff.at(r, i) + eps;
            }
        }
        const Tensor g = gradient_rows(f, pts);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < p; ++i) acc[i] += diff.at(r, i) * g.at(r, i);
    }
    for (double& v : acc) v /= static_cast<double>(n_samples);
    return acc;
}

Tensor sample_baselines(const Dataset& pool, std::size_t count, std::uint64_t seed) {
    if (pool.size() == 0) throw ConfigError("baseline pool is empty");
    Rng rng = Rng::derive(seed, 0xba5e);
    std::vector<std::size_t> order = rng.permutation(pool.size());
    order.resize(std::min(count, pool.size()));
    return gather_rows(pool.images, order);
}

AttributionMap attribute(const SvaeModel& m, std::span<const double> x, AttributionMethod method,
                         const AttributionTarget& target, std::span<const double> x_ref, const Tensor& shap_baselines,
                         const AttributionOptions& options) {
    check_image(x, m.input_dim);
    const RowFunction f = make_target(m, target, x_ref);
    AttributionMap out;
    out.method = method;
    out.target = target;
    switch (method) {
        case AttributionMethod::saliency: out.values = saliency(f, x); break;
        case AttributionMethod::ixg: out.values = input_x_gradient(f, x); break;
        case AttributionMethod::ig: {
            const std::vector<double> zeros(x.size(), 0.0);
            const std::span<const double> b = options.ig_baseline.empty() ? std::span<const double>(zeros)
                                                                           : std::span<const double>(options.ig_baseline);
            out.values = integrated_gradients(f, x, b, options.ig_steps);
            break;
        }
        case AttributionMethod::gradshap: {
            Rng rng(options.seed);
            out.values = gradient_shap(f, x, shap_baselines, options.shap_samples, options.shap_noise, rng);
            break;
        }
    }
    return out;
}

}  // namespace svae
