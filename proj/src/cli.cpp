#include "svae/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

#include "svae/attribution.hpp"
#include "svae/csv.hpp"
#include "svae/errors.hpp"
#include "svae/image_io.hpp"
#include "svae/invariance.hpp"
#include "svae/service.hpp"
#include "svae/training.hpp"

namespace svae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kToyTrain = 1600, kToyValid = 200, kToyTest = 400;
constexpr std::size_t kMnistTrain = 10000, kMnistValid = 2000;

std::string default_data_dir() {
    const char* env = std::getenv("SVAE_DATA_DIR");
    return env ? env : "";
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot open " + p.string() + " for writing");
    return f;
}

std::string csv_line(std::initializer_list<double> values) {
    std::string s;
    for (double v : values) {
        if (!s.empty()) s += ',';
        s += format_double(v);
    }
    return s;
}

/// Flags as given (or defaulted), for config.json.
json echo_options(const CLI::App& app) {
    json out = json::object();
    for (const CLI::Option* o : app.get_options()) {
        const std::string name = o->get_single_name();
        if (name.empty() || name.rfind("help", 0) == 0) continue;
        if (o->count() > 0) {
            const auto& r = o->results();
            out[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!o->get_default_str().empty()) {
            out[name] = o->get_default_str();
        } else {
            out[name] = nullptr;
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

std::size_t zoom_for(const Dataset& d) { return d.height <= 8 ? 8 : 4; }

Raster image_raster(const Dataset& like, std::span<const double> img, std::size_t zoom) {
    return gray_raster(img, like.height, like.width, zoom);
}

std::size_t check_index(const Dataset& d, std::size_t index) {
    if (index >= d.size()) {
        throw DomainError("index " + std::to_string(index) + " is out of range (" + std::to_string(d.size()) +
                          " test images)");
    }
    return index;
}

const CLI::Validator open_unit_interval(
    [](std::string& s) -> std::string {
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(s, &used);
            if (used != s.size()) return "not a number: " + s;
        } catch (const std::exception&) {
            return "not a number: " + s;
        }
        if (!(v > 0.0 && v < 1.0)) return "beta must lie in (0, 1), got " + s;
        return "";
    },
    "(0,1)");

struct Shared {
    std::string data = default_data_dir();
    std::string run_dir;
    std::size_t train_size = 0, valid_size = 0, test_size = 0;
};

void add_data_options(CLI::App* sub, Shared& s, bool sizes) {
    sub->add_option("--data", s.data, "MNIST directory or 'toy' (default: $SVAE_DATA_DIR)");
    sub->add_option("--run-dir", s.run_dir, "Output directory (default: runs/<command>)");
    if (sizes) {
        sub->add_option("--train-size", s.train_size, "Training images (0: 10000 for MNIST, 1600 for toy)");
        sub->add_option("--valid-size", s.valid_size, "Validation images taken after the training images");
    }
    sub->add_option("--test-size", s.test_size, "Test images to use (0: all)");
}

fs::path prepare_run_dir(const Shared& s, const std::string& command, const CLI::App& app, const json& extra = {}) {
    const fs::path dir = s.run_dir.empty() ? fs::path("runs") / command : fs::path(s.run_dir);
    fs::create_directories(dir);
    json cfg{{"command", command}, {"options", echo_options(app)}};
    if (!extra.is_null()) cfg.update(extra);
    open_out(dir / "config.json") << cfg.dump(2) << '\n';
    return dir;
}

void require_data(const Shared& s) {
    if (s.data.empty()) throw ConfigError("no data source: pass --data or set SVAE_DATA_DIR");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string model = "svae";
    double beta = 0.9, alpha = 6000.0, lr = 1e-3;
    std::size_t batch = 100, epochs = 20, d1 = 10, d2 = 5, samples = 32;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> hidden{512, 256}, cls_hidden{64};
    std::string activation = "relu";
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Shared& s, const CLI::App& app, std::ostream& out, std::ostream& err) {
    require_data(s);
    TrainConfig base;
    base.model_kind = parse_model_kind(a.model);
    base.beta = a.beta;
    base.alpha = a.alpha;
    base.learning_rate = a.lr;
    base.batch_size = a.batch;
    base.epochs = a.epochs;
    base.split = {a.d1, a.d2};
    base.architecture.encoder_hidden = a.hidden;
    base.architecture.classifier_hidden = a.cls_hidden;
    base.architecture.activation = parse_activation(a.activation);
    base.n_classify_samples = a.samples;
    base.seed = a.seed;

    const DataSplits data = load_data(s.data, DataNeeds::all, s.train_size, s.valid_size, s.test_size);
    const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector<std::uint64_t>{a.seed} : a.seeds;
    const fs::path dir = prepare_run_dir(s, "train", app,
                                         json{{"train_config", to_json(base)},
                                              {"data", {{"train", data.train.size()},
                                                        {"valid", data.valid.size()},
                                                        {"test", data.test.size()}}}});

    std::vector<double> accs, recs;
    std::ofstream per_seed = open_out(dir / "seeds.csv");
    per_seed << "seed,test_accuracy,reconstruction,final_valid_accuracy\n";
    for (std::uint64_t seed : seeds) {
        TrainConfig c = base;
        c.seed = seed;
        const fs::path seed_dir = a.seeds.empty() ? dir : dir / ("seed-" + std::to_string(seed));
        fs::create_directories(seed_dir);
        const Checkpoint ck = train(c, data.train, data.valid, [&](const EpochMetrics& m) {
            if (!a.quiet) {
                err << "seed " << seed << " epoch " << m.epoch << " total " << m.total << " R " << m.reconstruction
                    << " valid " << m.valid_accuracy << "%\n";
            }
        });
        save_checkpoint(ck, seed_dir / "checkpoint.svae");
        std::ofstream metrics = open_out(seed_dir / "metrics.csv");
        write_metrics_csv(ck.history, c.model_kind, metrics);
        const EvalMetrics ev = evaluate(ck, data.test, c.n_classify_samples, 0);
        const double valid = ck.history.empty() ? 0.0 : ck.history.back().valid_accuracy;
        per_seed << seed << ',' << csv_line({ev.accuracy, ev.reconstruction, valid}) << '\n';
        accs.push_back(ev.accuracy);
        recs.push_back(ev.reconstruction);
        out << "seed " << seed << ": test accuracy " << ev.accuracy << " %, R " << ev.reconstruction << '\n';
    }
    std::ofstream summary = open_out(dir / "summary.csv");
    summary << "metric,mean,std,n\n";
    summary << "test_accuracy," << csv_line({mean_of(accs), sample_std(accs)}) << ',' << accs.size() << '\n';
    summary << "reconstruction," << csv_line({mean_of(recs), sample_std(recs)}) << ',' << recs.size() << '\n';
    if (seeds.size() > 1) {
        out << "test accuracy " << mean_of(accs) << " +- " << sample_std(accs) << " % over " << seeds.size()
            << " seeds\n";
    }
    out << "wrote " << dir.string() << '\n';
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, const Shared& s, const CLI::App& app, std::ostream& out) {
    require_data(s);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const DataSplits data = load_data(s.data, DataNeeds::test_only, 0, 0, s.test_size);
    const std::size_t n = a.samples ? a.samples : ck.config.n_classify_samples;
    const fs::path dir = prepare_run_dir(s, "eval", app);
    const EvalMetrics ev = evaluate(ck, data.test, n, a.seed);
    open_out(dir / "eval.csv") << "accuracy,reconstruction,total\n"
                               << csv_line({ev.accuracy, ev.reconstruction, ev.total}) << '\n';
    std::ofstream pred = open_out(dir / "predictions.csv");
    pred << "index,label,prediction\n";
    for (std::size_t i = 0; i < ev.predictions.size(); ++i)
        pred << i << ',' << data.test.labels[i] << ',' << ev.predictions[i] << '\n';
    out << "accuracy: " << format_double(ev.accuracy) << " %\n";
    out << "R: " << format_double(ev.reconstruction) << '\n';
    return 0;
}

struct InvarianceArgs {
    std::string checkpoint;
    std::vector<double> sigmas = default_sigma_grid();
    std::size_t per_sigma = 10, count = 500, samples = 0, examples = 0;
    std::uint64_t seed = 0;
};

int cmd_invariance(const InvarianceArgs& a, const Shared& s, const CLI::App& app, std::ostream& out) {
    require_data(s);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const SvaeModel m = ck.svae();
    const DataSplits data = load_data(s.data, DataNeeds::test_only, 0, 0, s.test_size);
    const Dataset d = data.test.slice(0, std::min(a.count, data.test.size()));
    const std::size_t n = a.samples ? a.samples : ck.config.n_classify_samples;
    const fs::path dir = prepare_run_dir(s, "invariance", app);

    const RetentionCurve c = invariance_test(m, d, a.sigmas, a.per_sigma, a.seed, n);
    std::ofstream csv = open_out(dir / "retention.csv");
    csv << "sigma,retention,mean_l2\n";
    for (std::size_t k = 0; k < c.sigma_grid.size(); ++k) {
        csv << csv_line({c.sigma_grid[k], c.retention[k], c.mean_l2[k]}) << '\n';
        out << "sigma " << c.sigma_grid[k] << ": retention " << c.retention[k] << ", mean L2 " << c.mean_l2[k]
            << '\n';
    }
    if (a.examples > 0) {
        // Row 0: originals; one row of invariant samples per sigma.
        const std::size_t cols = std::min(a.examples, d.size()), zoom = zoom_for(d);
        std::vector<Raster> tiles;
        for (std::size_t i = 0; i < cols; ++i) tiles.push_back(image_raster(d, d.image(i), zoom));
        for (std::size_t k = 0; k < a.sigmas.size(); ++k) {
            for (std::size_t i = 0; i < cols; ++i) {
                Rng rng = Rng::derive(a.seed, 7, k, i);
                const InvariantSample smp = generate_invariant(m, d.image(i), a.sigmas[k], rng, {n, false, 1});
                tiles.push_back(image_raster(d, smp.transformed, zoom));
            }
        }
        write_png(tile_rasters(tiles, a.sigmas.size() + 1, cols), dir / "examples.png");
    }
    return 0;
}

struct ExploreArgs {
    std::string checkpoint;
    std::size_t index = 0, radius = 2;
    std::vector<std::size_t> dims{0, 1};
    double step = 0.5;
};

int cmd_explore(const ExploreArgs& a, const Shared& s, const CLI::App& app, std::ostream& out) {
    require_data(s);
    if (a.dims.size() != 2) throw ConfigError("--dims takes two nuisance dimensions, e.g. 1,3");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const SvaeModel m = ck.svae();
    const DataSplits data = load_data(s.data, DataNeeds::test_only, 0, 0, s.test_size);
    const auto x = data.test.image(check_index(data.test, a.index));
    const fs::path dir = prepare_run_dir(s, "explore", app);
    const LatentGrid g = explore_grid(m, x, a.dims[0], a.dims[1], a.step, a.radius);
    const std::size_t zoom = zoom_for(data.test);
    std::vector<Raster> tiles;
    for (const auto& img : g.images) tiles.push_back(image_raster(data.test, img, zoom));
    write_png(tile_rasters(tiles, g.side(), g.side()), dir / "grid.png");
    std::ofstream csv = open_out(dir / "grid.csv");
    csv << "row,col,offset_i,offset_j\n";
    const auto r = static_cast<long long>(g.radius);
    for (long long i = -r; i <= r; ++i)
        for (long long j = -r; j <= r; ++j)
            csv << (i + r) << ',' << (j + r) << ',' << csv_line({double(i) * a.step, double(j) * a.step}) << '\n';
    out << "wrote " << g.side() << "x" << g.side() << " grid to " << (dir / "grid.png").string() << '\n';
    return 0;
}

struct ExplainArgs {
    std::string checkpoint, method = "ig", target = "classifier:0";
    std::size_t index = 0, ref_index = 0, ig_steps = 256, shap_samples = 200;
    bool has_ref = false;
    double shap_noise = 0.0;
    std::uint64_t seed = 0;
};

int cmd_explain(const ExplainArgs& a, const Shared& s, const CLI::App& app, std::ostream& out) {
    require_data(s);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const SvaeModel m = ck.svae();
    const AttributionMethod method = parse_attribution_method(a.method);
    const AttributionTarget target = parse_attribution_target(a.target);
    const bool need_train = method == AttributionMethod::gradshap;
    const DataSplits data =
        load_data(s.data, need_train ? DataNeeds::train_and_test : DataNeeds::test_only, s.train_size, 0, s.test_size);
    const auto x = data.test.image(check_index(data.test, a.index));
    std::span<const double> ref;
    if (target.kind == AttributionTarget::Kind::divergence) {
        if (!a.has_ref) throw ConfigError("divergence targets need --ref-index");
        ref = data.test.image(check_index(data.test, a.ref_index));
    }
    AttributionOptions o;
    o.ig_steps = a.ig_steps;
    o.shap_samples = a.shap_samples;
    o.shap_noise = a.shap_noise;
    o.seed = a.seed;
    const Tensor baselines = need_train ? sample_baselines(data.train, kDefaultShapBaselines, a.seed) : Tensor();
    const fs::path dir = prepare_run_dir(s, "explain", app);
    const AttributionMap map = attribute(m, x, method, target, ref, baselines, o);
    std::ofstream csv = open_out(dir / "attribution.csv");
    write_csv_row(csv, map.values);
    const std::size_t zoom = zoom_for(data.test);
    write_png(tile_rasters({to_rgb(image_raster(data.test, x, zoom)),
                            diverging_heatmap(map.values, data.test.height, data.test.width, zoom)},
                           1, 2),
              dir / "heatmap.png");
    out << to_string(method) << " attribution for " << target.to_string() << " written to "
        << (dir / "attribution.csv").string() << '\n';
    return 0;
}

struct CounterfactualArgs {
    std::string checkpoint, target = "all";
    std::size_t index = 0, max_iters = 500;
    double step = 0.1;
};

int cmd_counterfactual(const CounterfactualArgs& a, const Shared& s, const CLI::App& app, std::ostream& out) {
    require_data(s);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const SvaeModel m = ck.svae();
    const DataSplits data = load_data(s.data, DataNeeds::test_only, 0, 0, s.test_size);
    const auto x = data.test.image(check_index(data.test, a.index));
    std::vector<std::size_t> targets;
    if (a.target == "all") {
        targets.resize(m.num_classes);
        std::iota(targets.begin(), targets.end(), 0);
    } else {
        std::size_t used = 0;
        const unsigned long t = std::stoul(a.target, &used);
        if (used != a.target.size()) throw ConfigError("--target takes a class index or 'all'");
        targets.push_back(t);
    }
    const fs::path dir = prepare_run_dir(s, "counterfactual", app);
    std::ofstream csv = open_out(dir / "counterfactuals.csv");
    csv << "target,converged,iterations,target_probability\n";
    const std::size_t zoom = zoom_for(data.test);
    std::vector<Raster> tiles{image_raster(data.test, x, zoom)};
    for (std::size_t t : targets) {
        const CounterfactualResult r = counterfactual(m, x, t, a.max_iters, a.step);
        csv << t << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << format_double(r.target_probability)
            << '\n';
        tiles.push_back(image_raster(data.test, r.image, zoom));
        out << "class " << t << ": p = " << r.target_probability << " after " << r.iterations << " steps"
            << (r.converged ? "" : " (not converged)") << '\n';
    }
    write_png(tile_rasters(tiles, 1, tiles.size()), dir / "strip.png");
    return 0;
}

struct ServeArgs {
    std::string checkpoint, host = "127.0.0.1";
    int port = 8080;
    std::size_t threads = 4;
};

int cmd_serve(const ServeArgs& a, const Shared& s, std::ostream& out) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    std::optional<Dataset> samples, pool;
    if (!s.data.empty()) {
        DataSplits data = load_data(s.data, DataNeeds::train_and_test, s.train_size, 0, s.test_size);
        samples = std::move(data.test);
        pool = std::move(data.train);
    }
    const service::Snapshot snap = service::Snapshot::from_checkpoint(std::move(ck), std::move(samples), std::move(pool));
    service::ServerOptions o;
    o.host = a.host;
    o.port = a.port;
    o.threads = a.threads;
    service::Server server(snap, o);
    const int port = server.bind();
    out << "serving on http://" << a.host << ':' << port << std::endl;
    server.listen();
    return 0;
}

}  // namespace

DataSplits load_data(const std::string& source, DataNeeds needs, std::size_t train_size, std::size_t valid_size,
                     std::size_t test_size) {
    DataSplits d;
    const bool want_train = needs != DataNeeds::test_only, want_valid = needs == DataNeeds::all;
    if (source == "toy") {
        auto per_class = [](std::size_t n, std::size_t fallback) { return std::max<std::size_t>(1, (n ? n : fallback) / 4); };
        if (want_train) d.train = synth_toy_dataset(11, per_class(train_size, kToyTrain));
        if (want_valid) d.valid = synth_toy_dataset(13, per_class(valid_size, kToyValid));
        d.test = synth_toy_dataset(12, per_class(test_size, kToyTest));
        return d;
    }
    if (source.empty()) throw ConfigError("no data source: pass --data or set SVAE_DATA_DIR");
    const std::size_t n_train = train_size ? train_size : kMnistTrain;
    if (want_train) d.train = load_mnist(source, MnistPart::train, 0, n_train);
    if (want_valid) d.valid = load_mnist(source, MnistPart::train, n_train, valid_size ? valid_size : kMnistValid);
    d.test = load_mnist(source, MnistPart::test, 0, test_size);
    return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Supervised VAE toolkit: train, evaluate and probe latent invariances", "svae"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Shared shared;
    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train an SVAE or SemiVAE model");
    add_data_options(train_cmd, shared, true);
    train_cmd->add_option("--model", ta.model, "svae or semivae")->capture_default_str()->check(
        CLI::IsMember({"svae", "semivae"}));
    train_cmd->add_option("--beta", ta.beta, "Weight of the sufficiency term, in (0,1)")
        ->capture_default_str()
        ->check(open_unit_interval);
    train_cmd->add_option("--alpha", ta.alpha, "Classifier weight")->capture_default_str()->check(
        CLI::PositiveNumber);
    train_cmd->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", ta.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", ta.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--d1", ta.d1, "Classifier latent dimensions")->capture_default_str();
    train_cmd->add_option("--d2", ta.d2, "Nuisance latent dimensions")->capture_default_str();
    train_cmd->add_option("--hidden", ta.hidden, "Encoder hidden widths")->delimiter(',')->capture_default_str();
    train_cmd->add_option("--cls-hidden", ta.cls_hidden, "Classifier hidden widths")
        ->delimiter(',')
        ->capture_default_str();
    train_cmd->add_option("--activation", ta.activation, "relu, tanh or softplus")->capture_default_str();
    train_cmd->add_option("--samples", ta.samples, "Monte Carlo draws when classifying")->capture_default_str();
    train_cmd->add_option("--seed", ta.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--seeds", ta.seeds, "Seed sweep, e.g. 1,2,3")->delimiter(',');
    train_cmd->add_flag("--quiet", ta.quiet, "No per-epoch log");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Test accuracy and reconstruction term");
    add_data_options(eval_cmd, shared, false);
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--samples", ea.samples, "Monte Carlo draws (0: from checkpoint)");
    eval_cmd->add_option("--seed", ea.seed, "Seed")->capture_default_str();

    InvarianceArgs ia;
    auto* inv_cmd = app.add_subcommand("invariance", "Prediction retention under nuisance resampling");
    add_data_options(inv_cmd, shared, false);
    inv_cmd->add_option("--checkpoint", ia.checkpoint, "Checkpoint file")->required();
    inv_cmd->add_option("--sigmas", ia.sigmas, "Noise scales")->delimiter(',')->capture_default_str();
    inv_cmd->add_option("--per-sigma", ia.per_sigma, "Draws per image and sigma")->capture_default_str();
    inv_cmd->add_option("--count", ia.count, "Test images")->capture_default_str();
    inv_cmd->add_option("--samples", ia.samples, "Monte Carlo draws (0: from checkpoint)");
    inv_cmd->add_option("--examples", ia.examples, "Write a PNG with this many example columns");
    inv_cmd->add_option("--seed", ia.seed, "Seed")->capture_default_str();

    ExploreArgs xa;
    auto* explore_cmd = app.add_subcommand("explore", "Grid over two nuisance dimensions");
    add_data_options(explore_cmd, shared, false);
    explore_cmd->add_option("--checkpoint", xa.checkpoint, "Checkpoint file")->required();
    explore_cmd->add_option("--index", xa.index, "Test image index")->capture_default_str();
    explore_cmd->add_option("--dims", xa.dims, "Two nuisance dimensions")->delimiter(',')->capture_default_str();
    explore_cmd->add_option("--step", xa.step, "Offset per cell")->capture_default_str();
    explore_cmd->add_option("--radius", xa.radius, "Cells on each side of the centre")->capture_default_str();

    ExplainArgs pa;
    auto* explain_cmd = app.add_subcommand("explain", "Attribution map for one test image");
    add_data_options(explain_cmd, shared, true);
    explain_cmd->add_option("--checkpoint", pa.checkpoint, "Checkpoint file")->required();
    explain_cmd->add_option("--index", pa.index, "Test image index")->capture_default_str();
    explain_cmd->add_option("--method", pa.method, "saliency, ixg, ig or gradshap")->capture_default_str();
    explain_cmd->add_option("--target", pa.target, "classifier:<c> or divergence:k=<1|2>")->capture_default_str();
    auto* ref_opt = explain_cmd->add_option("--ref-index", pa.ref_index, "Reference test image for divergence");
    explain_cmd->add_option("--ig-steps", pa.ig_steps, "Integrated gradients steps")->capture_default_str();
    explain_cmd->add_option("--shap-samples", pa.shap_samples, "GradientShap samples")->capture_default_str();
    explain_cmd->add_option("--shap-noise", pa.shap_noise, "GradientShap noise sigma")->capture_default_str();
    explain_cmd->add_option("--seed", pa.seed, "Seed")->capture_default_str();

    CounterfactualArgs ca;
    auto* cf_cmd = app.add_subcommand("counterfactual", "Steer z1 towards target classes");
    add_data_options(cf_cmd, shared, false);
    cf_cmd->add_option("--checkpoint", ca.checkpoint, "Checkpoint file")->required();
    cf_cmd->add_option("--index", ca.index, "Test image index")->capture_default_str();
    cf_cmd->add_option("--target", ca.target, "Class index or 'all'")->capture_default_str();
    cf_cmd->add_option("--max-iters", ca.max_iters, "Ascent steps")->capture_default_str();
    cf_cmd->add_option("--step", ca.step, "Step size")->capture_default_str();

    ServeArgs sa;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API over a checkpoint");
    serve_cmd->add_option("--data", shared.data, "Dataset for the sample picker and GradientShap baselines");
    serve_cmd->add_option("--test-size", shared.test_size, "Test images to serve (0: all)");
    serve_cmd->add_option("--train-size", shared.train_size, "Baseline pool size (0: default)");
    serve_cmd->add_option("--checkpoint", sa.checkpoint, "SVAE checkpoint")->required();
    serve_cmd->add_option("--host", sa.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", sa.port, "Port")->capture_default_str();
    serve_cmd->add_option("--threads", sa.threads, "Worker threads")->capture_default_str();

    if (args.empty()) {
        err << app.help();
        return 2;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(ta, shared, *train_cmd, out, err);
        if (*eval_cmd) return cmd_eval(ea, shared, *eval_cmd, out);
        if (*inv_cmd) return cmd_invariance(ia, shared, *inv_cmd, out);
        if (*explore_cmd) return cmd_explore(xa, shared, *explore_cmd, out);
        if (*explain_cmd) {
            pa.has_ref = ref_opt->count() > 0;
            return cmd_explain(pa, shared, *explain_cmd, out);
        }
        if (*cf_cmd) return cmd_counterfactual(ca, shared, *cf_cmd, out);
        if (*serve_cmd) return cmd_serve(sa, shared, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace svae::cli
