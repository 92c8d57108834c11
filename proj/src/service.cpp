#include "svae/service.hpp"

#include <httplib.h>

#include <cmath>

#include "svae/attribution.hpp"
#include "svae/errors.hpp"
#include "svae/invariance.hpp"

namespace svae::service {

namespace {

constexpr std::size_t kMaxGridRadius = 10;
constexpr std::size_t kMaxSamples = 4096;

struct HttpError : std::runtime_error {
    int status;
    HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

[[noreturn]] void bad_request(const std::string& msg) { throw HttpError(400, msg); }

Response error_response(int status, const std::string& msg) { return {status, json{{"error", msg}}}; }

const json& field(const json& req, const char* key) {
    if (!req.contains(key)) bad_request(std::string("missing field '") + key + "'");
    return req.at(key);
}

std::vector<double> image_field(const json& req, const char* key, std::size_t p) {
    const json& v = field(req, key);
    if (!v.is_array()) bad_request(std::string("'") + key + "' must be an array of numbers");
    if (v.size() != p) {
        bad_request(std::string("'") + key + "' has " + std::to_string(v.size()) + " values, the model expects " +
                    std::to_string(p));
    }
    std::vector<double> out(p);
    for (std::size_t i = 0; i < p; ++i) {
        if (!v[i].is_number()) bad_request(std::string("'") + key + "' must contain only numbers");
        out[i] = v[i].get<double>();
    }
    for (double x : out)
        if (!std::isfinite(x)) throw HttpError(422, std::string("'") + key + "' contains a non-finite value");
    for (double x : out)
        if (x < 0.0 || x > 1.0) bad_request(std::string("'") + key + "' values must lie in [0, 1]");
    return out;
}

std::vector<double> vector_field(const json& req, const char* key, std::size_t n) {
    const json& v = field(req, key);
    if (!v.is_array() || v.size() != n) {
        bad_request(std::string("'") + key + "' must be an array of " + std::to_string(n) + " numbers");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!v[i].is_number()) bad_request(std::string("'") + key + "' must contain only numbers");
        out[i] = v[i].get<double>();
        if (!std::isfinite(out[i])) throw HttpError(422, std::string("'") + key + "' contains a non-finite value");
    }
    return out;
}

double number_field(const json& req, const char* key) {
    const json& v = field(req, key);
    if (!v.is_number()) bad_request(std::string("'") + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw HttpError(422, std::string("'") + key + "' is not finite");
    return x;
}

std::uint64_t count_field(const json& req, const char* key, std::uint64_t fallback) {
    if (!req.contains(key)) return fallback;
    const json& v = req.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        bad_request(std::string("'") + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::size_t samples_field(const Snapshot& s, const json& req) {
    const std::uint64_t n = count_field(req, "samples", s.checkpoint.config.n_classify_samples);
    if (n == 0 || n > kMaxSamples) bad_request("'samples' must be between 1 and " + std::to_string(kMaxSamples));
    return n;
}

json probs_json(const std::vector<double>& probs) {
    return json{{"probs", probs}, {"predicted_class", argmax(probs)}};
}

std::vector<double> class_probs(const SvaeModel& m, std::span<const double> x, std::size_t n, Rng& rng) {
    return classify(m, x, n, rng).probabilities();
}

template <class F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const HttpError& e) {
        return error_response(e.status, e.what());
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed request: ") + e.what());
    } catch (const NonFiniteError& e) {
        return error_response(422, e.what());
    } catch (const Error& e) {
        return error_response(400, e.what());
    }
}

}  // namespace

Snapshot Snapshot::from_checkpoint(Checkpoint ck, std::optional<Dataset> samples, std::optional<Dataset> baselines) {
    if (ck.config.model_kind != ModelKind::svae) throw ConfigError("the service needs an SVAE checkpoint");
    Snapshot s;
    s.model = ck.svae();
    s.checkpoint = std::move(ck);
    for (const auto* d : {&samples, &baselines}) {
        if (*d && (*d)->input_dim() != s.model.input_dim) throw DimensionError("dataset images do not match the model");
    }
    s.samples = std::move(samples);
    s.baselines = std::move(baselines);
    return s;
}

json model_metadata(const Snapshot& s) {
    const TrainConfig& c = s.checkpoint.config;
    return json{{"model_kind", to_string(c.model_kind)},
                {"d1", s.model.split.d1},
                {"d2", s.model.split.d2},
                {"num_classes", s.model.num_classes},
                {"height", c.height},
                {"width", c.width},
                {"input_dim", s.model.input_dim},
                {"epoch", s.checkpoint.epoch},
                {"config", to_json(c)},
                {"dataset_size", s.samples ? s.samples->size() : 0}};
}

Response handle_model(const Snapshot& s) { return {200, model_metadata(s)}; }

Response handle_dataset_sample(const Snapshot& s, const std::string& index) {
    return guarded([&] {
        if (!s.samples) return error_response(404, "no dataset loaded");
        if (index.empty() || index.find_first_not_of("0123456789") != std::string::npos || index.size() > 18)
            bad_request("'index' must be a nonnegative integer");
        const std::size_t i = std::stoull(index);
        if (i >= s.samples->size())
            bad_request("index " + index + " is out of range (dataset has " + std::to_string(s.samples->size()) +
                        " images)");
        const auto img = s.samples->image(i);
        return Response{200, json{{"index", i},
                                  {"label", s.samples->labels[i]},
                                  {"image", std::vector<double>(img.begin(), img.end())}}};
    });
}

Response handle_encode(const Snapshot& s, const json& req) {
    return guarded([&] {
        const SvaeModel& m = s.model;
        const auto x = image_field(req, "image", m.input_dim);
        const std::size_t n = samples_field(s, req);
        const std::uint64_t seed = count_field(req, "seed", 0);
        const DiagonalGaussian q = encode_x(m, x);
        const auto d1 = static_cast<std::ptrdiff_t>(m.split.d1);
        Rng rng(seed);
        json out = probs_json(class_probs(m, x, n, rng));
        out["z1_mean"] = std::vector<double>(q.mean.begin(), q.mean.begin() + d1);
        out["z1_std"] = std::vector<double>(q.std.begin(), q.std.begin() + d1);
        out["z2_mean"] = std::vector<double>(q.mean.begin() + d1, q.mean.end());
        out["z2_std"] = std::vector<double>(q.std.begin() + d1, q.std.end());
        return Response{200, out};
    });
}

Response handle_generate(const Snapshot& s, const json& req) {
    return guarded([&] {
        const SvaeModel& m = s.model;
        const auto x = image_field(req, "image", m.input_dim);
        const bool has_sigma = req.contains("sigma") && !req.at("sigma").is_null();
        const bool has_z2 = req.contains("z2_override") && !req.at("z2_override").is_null();
        if (has_sigma == has_z2) bad_request("give exactly one of 'sigma' and 'z2_override'");
        const std::size_t n = samples_field(s, req);
        const std::uint64_t seed = count_field(req, "seed", 0);
        Rng draw = Rng::derive(seed, 0);
        InvariantSample sample;
        if (has_sigma) {
            const double sigma = number_field(req, "sigma");
            if (!(sigma > 0.0)) bad_request("'sigma' must be positive");
            sample = generate_invariant(m, x, sigma, draw, {n, false, 1});
        } else {
            sample = generate_with_z2(m, x, vector_field(req, "z2_override", m.split.d2), draw, n);
        }
        Rng cls = Rng::derive(seed, 1);
        json out = probs_json(class_probs(m, sample.transformed, n, cls));
        out["image"] = sample.transformed;
        out["z2_used"] = sample.z2_used;
        out["original_class"] = sample.original_pred;
        return Response{200, out};
    });
}

Response handle_grid(const Snapshot& s, const json& req) {
    return guarded([&] {
        const SvaeModel& m = s.model;
        const auto x = image_field(req, "image", m.input_dim);
        const std::uint64_t di = count_field(req, "dim_i", 0), dj = count_field(req, "dim_j", 1);
        const double step = req.contains("step") ? number_field(req, "step") : 0.5;
        const std::uint64_t radius = count_field(req, "radius", 2);
        if (radius > kMaxGridRadius) bad_request("'radius' must be at most " + std::to_string(kMaxGridRadius));
        const LatentGrid g = explore_grid(m, x, di, dj, step, radius);
        return Response{200, json{{"side", g.side()},
                                  {"radius", g.radius},
                                  {"dim_i", g.dim_i},
                                  {"dim_j", g.dim_j},
                                  {"step", g.step},
                                  {"center_index", g.radius * g.side() + g.radius},
                                  {"images", g.images},
                                  {"latents", g.latents}}};
    });
}

Response handle_attribute(const Snapshot& s, const json& req) {
    return guarded([&] {
        const SvaeModel& m = s.model;
        const auto x = image_field(req, "image", m.input_dim);
        const json& method_field = field(req, "method");
        const json& target_field = field(req, "target");
        if (!method_field.is_string() || !target_field.is_string()) bad_request("'method' and 'target' must be strings");
        const AttributionMethod method = parse_attribution_method(method_field.get<std::string>());
        const std::string kind = target_field.get<std::string>();

        AttributionTarget target;
        std::vector<double> ref;
        if (kind == "classifier") {
            target.kind = AttributionTarget::Kind::classifier;
            if (!req.contains("class")) bad_request("classifier target needs 'class'");
            target.class_index = count_field(req, "class", 0);
            if (target.class_index >= m.num_classes) bad_request("'class' is out of range");
        } else if (kind == "divergence") {
            target.kind = AttributionTarget::Kind::divergence;
            if (!req.contains("k")) bad_request("divergence target needs 'k'");
            target.k = count_field(req, "k", 0);
            if (target.k != 1 && target.k != 2) bad_request("'k' must be 1 or 2");
            ref = image_field(req, "ref_image", m.input_dim);
        } else {
            bad_request("'target' must be 'classifier' or 'divergence'");
        }

        AttributionOptions o;
        o.seed = count_field(req, "seed", 0);
        o.ig_steps = count_field(req, "ig_steps", o.ig_steps);
        o.shap_samples = count_field(req, "shap_samples", o.shap_samples);
        if (o.ig_steps == 0 || o.ig_steps > 4096 || o.shap_samples == 0 || o.shap_samples > 4096)
            bad_request("'ig_steps' and 'shap_samples' must be between 1 and 4096");
        if (req.contains("shap_noise")) o.shap_noise = number_field(req, "shap_noise");
        if (o.shap_noise < 0.0) bad_request("'shap_noise' must be nonnegative");
        if (req.contains("baseline")) o.ig_baseline = image_field(req, "baseline", m.input_dim);

        Tensor baselines;
        if (method == AttributionMethod::gradshap) {
            if (!s.baselines) bad_request("gradshap needs a baseline dataset on the server");
            baselines = sample_baselines(*s.baselines, kDefaultShapBaselines, o.seed);
        }
        const AttributionMap a = attribute(m, x, method, target, ref, baselines, o);
        return Response{200, json{{"attributions", a.values},
                                  {"method", to_string(a.method)},
                                  {"target", a.target.to_string()}}};
    });
}

Response handle_counterfactual(const Snapshot& s, const json& req) {
    return guarded([&] {
        const SvaeModel& m = s.model;
        const auto x = image_field(req, "image", m.input_dim);
        if (!req.contains("target_class")) bad_request("missing field 'target_class'");
        const std::uint64_t target = count_field(req, "target_class", 0);
        if (target >= m.num_classes) bad_request("'target_class' is out of range");
        const std::uint64_t iters = count_field(req, "max_iters", 500);
        if (iters > 10000) bad_request("'max_iters' must be at most 10000");
        const double step = req.contains("step") ? number_field(req, "step") : 0.1;
        const CounterfactualResult r = counterfactual(m, x, target, iters, step);
        json out = probs_json(r.probabilities);
        out["image"] = r.image;
        out["converged"] = r.converged;
        out["iterations"] = r.iterations;
        out["target_probability"] = r.target_probability;
        out["z"] = r.z;
        return Response{200, out};
    });
}

Response route(const Snapshot& s, const std::string& method, const std::string& path, const std::string& body,
               const std::map<std::string, std::string>& query) {
    if (method == "GET") {
        if (path == "/api/model") return handle_model(s);
        if (path == "/api/dataset/sample") {
            const auto it = query.find("index");
            if (it == query.end()) return error_response(400, "missing query parameter 'index'");
            return handle_dataset_sample(s, it->second);
        }
    } else if (method == "POST") {
        using Handler = Response (*)(const Snapshot&, const json&);
        static const std::map<std::string, Handler> handlers{{"/api/encode", handle_encode},
                                                            {"/api/generate", handle_generate},
                                                            {"/api/grid", handle_grid},
                                                            {"/api/attribute", handle_attribute},
                                                            {"/api/counterfactual", handle_counterfactual}};
        const auto it = handlers.find(path);
        if (it != handlers.end()) {
            json req;
            try {
                req = json::parse(body);
            } catch (const json::out_of_range& e) {
                // Literals such as 1e999 overflow to infinity.
                return error_response(422, std::string("non-finite number in request: ") + e.what());
            } catch (const json::exception&) {
                return error_response(400, "body must be a JSON object");
            }
            if (!req.is_object()) return error_response(400, "body must be a JSON object");
            return it->second(s, req);
        }
    }
    return error_response(404, "no route for " + method + " " + path);
}

struct Server::Impl {
    Impl(const Snapshot& s, ServerOptions o) : snapshot(s), options(std::move(o)) {}
    const Snapshot& snapshot;
    ServerOptions options;
    httplib::Server http;
    int port = -1;
};

Server::Server(const Snapshot& snapshot, ServerOptions options)
    : impl_(std::make_unique<Impl>(snapshot, std::move(options))) {
    Impl& im = *impl_;
    const std::size_t threads = std::max<std::size_t>(1, im.options.threads);
    im.http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    im.http.set_default_headers({{"Access-Control-Allow-Origin", im.options.cors_origin},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    im.http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    auto serve = [&im](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query.emplace(k, v);
        const Response r = route(im.snapshot, req.method, req.path, req.body, query);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    im.http.Get(R"(/api/.*)", serve);
    im.http.Post(R"(/api/.*)", serve);
}

Server::~Server() = default;

int Server::bind() {
    Impl& im = *impl_;
    im.port = im.options.port == 0 ? im.http.bind_to_any_port(im.options.host)
                                   : (im.http.bind_to_port(im.options.host, im.options.port) ? im.options.port : -1);
    if (im.port < 0) throw Error("cannot bind " + im.options.host + ":" + std::to_string(im.options.port));
    return im.port;
}

void Server::listen() {
    if (impl_->port < 0) bind();
    impl_->http.listen_after_bind();
}

void Server::stop() { impl_->http.stop(); }

}  // namespace svae::service
