#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "svae/attribution.hpp"
#include "svae/cli.hpp"
#include "svae/distributions.hpp"
#include "svae/invariance.hpp"
#include "svae/training.hpp"
#include "test_util.hpp"

using namespace svae;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-5, kGradEps = 1e-5, kGradSeconds = 60;
constexpr double kEntropyTol = 1e-12, kKlSigmas = 3.0;
constexpr int kKlSamples = 1'000'000;
constexpr double kToySvaeAcc = 98.0, kToySemiAcc = 95.0, kToySeconds = 120;
constexpr double kMnistAcc = 95.0, kMnistSeconds = 20 * 60;
constexpr double kRetentionAtOne = 0.90, kRetentionSlack = 0.02;
constexpr std::size_t kInvImages = 500, kInvDraws = 10;
constexpr std::size_t kStructuralPairs = 1000;
constexpr std::size_t kIgImages = 50, kIgSteps = 256;
constexpr double kIgRel = 1e-2, kIgAbs = 1e-4;
constexpr std::size_t kDivergencePairs = 1000;
constexpr double kCounterfactualP = 0.9;
constexpr std::size_t kCounterfactualIters = 500;
constexpr double kInvariantDivergenceShare = 0.90;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<std::pair<std::string, Outcome>> results;

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(seconds_since(t0), 3) << " s]"
              << std::endl;
    results.emplace_back(name, o);
}

void perturb(ParameterSet& params, Rng& rng, double scale) {
    for (auto& [name, t] : params)
        for (double& v : t.values()) v += scale * rng.normal();
}

ArchitectureOptions small_arch() {
    ArchitectureOptions o;
    o.encoder_hidden = {7, 5};
    o.classifier_hidden = {4};
    return o;
}

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240);
    double worst_svae = 0, worst_semi = 0;
    for (int draw = 0; draw < 20; ++draw) {
        SvaeModel m = SvaeModel::create(6, 3, {2, 2}, small_arch(), 1000 + draw, false);
        perturb(m.params, rng, 0.3);
        const Tensor x = testing::random_images(rng, 3, 6);
        const auto y = testing::random_labels(rng, 3, 3);
        const Tensor noise = testing::random_tensor(rng, 3, 4);
        const double beta = 0.05 + 0.9 * rng.uniform(), alpha = 0.5 + 10 * rng.uniform();
        const ElboEvaluation ev = svae_elbo_gradient(m, x, y, beta, alpha, noise);
        worst_svae = std::max(worst_svae, testing::parameter_gradient_check(
                                              [&](const ParameterSet& ps) {
                                                  SvaeModel c = m;
                                                  c.params = ps;
                                                  return svae_elbo(c, x, y, beta, alpha, noise).total;
                                              },
                                              m.params, ev.total_gradient, kGradEps));

        SemiVaeModel s = SemiVaeModel::create(6, 3, 3, small_arch(), 2000 + draw, false);
        perturb(s.params, rng, 0.3);
        const Tensor xs = testing::random_images(rng, 2, 6);
        const auto ys = testing::random_labels(rng, 2, 3);
        const Tensor ns = testing::random_tensor(rng, 6, 3);
        const SemiVaeEvaluation es = semivae_elbo_gradient(s, xs, ys, alpha, ns);
        worst_semi = std::max(worst_semi, testing::parameter_gradient_check(
                                              [&](const ParameterSet& ps) {
                                                  SemiVaeModel c = s;
                                                  c.params = ps;
                                                  return semivae_elbo(c, xs, ys, alpha, ns).total;
                                              },
                                              s.params, es.total_gradient, kGradEps));
    }
    const double secs = seconds_since(t0);
    return {worst_svae <= kGradTol && worst_semi <= kGradTol && secs < kGradSeconds,
            "20 draws each, max relative error SVAE " + fmt(worst_svae, 3) + ", SemiVAE " + fmt(worst_semi, 3) +
                " (tol " + fmt(kGradTol) + ")"};
}

Outcome kl_entropy_oracles() {
    Rng rng(77);
    const DiagonalGaussian q{{0.3, -1.0, 2.0}, {0.7, 1.5, 0.4}};
    const DiagonalGaussian p{{0.0, 0.5, 1.0}, {1.0, 0.8, 2.0}};
    auto log_density = [](const DiagonalGaussian& g, const std::vector<double>& z) {
        double s = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double u = (z[i] - g.mean[i]) / g.std[i];
            s += -0.5 * std::log(2 * std::numbers::pi) - std::log(g.std[i]) - 0.5 * u * u;
        }
        return s;
    };
    double acc = 0, acc2 = 0;
    std::vector<double> z(3);
    for (int n = 0; n < kKlSamples; ++n) {
        for (std::size_t i = 0; i < 3; ++i) z[i] = q.mean[i] + q.std[i] * rng.normal();
        const double d = log_density(q, z) - log_density(p, z);
        acc += d;
        acc2 += d * d;
    }
    const double mc = acc / kKlSamples, se = std::sqrt((acc2 / kKlSamples - mc * mc) / kKlSamples);
    const double kl = kl_diag_gaussians(q, p);
    const double z_score = std::abs(kl - mc) / se;

    double worst_h = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Categorical c{std::vector<double>(2 + rng.below(9))};
        for (double& v : c.logits) v = 4 * rng.normal();
        double h = 0;
        for (double v : c.probabilities()) h -= v > 0 ? v * std::log(v) : 0.0;
        worst_h = std::max(worst_h, std::abs(categorical_entropy(c) - h));
    }
    return {z_score <= kKlSigmas && worst_h <= kEntropyTol,
            "KL " + fmt(kl, 6) + " vs MC " + fmt(mc, 6) + " (" + fmt(z_score, 3) + " SE), entropy max error " +
                fmt(worst_h, 3)};
}

TrainConfig toy_config(ModelKind kind) {
    TrainConfig c;
    c.model_kind = kind;
    c.beta = 0.9;
    c.alpha = 50;
    c.batch_size = 32;
    c.epochs = 30;
    c.seed = 7;
    c.split = {4, 3};
    c.architecture.encoder_hidden = {64, 32};
    c.architecture.classifier_hidden = {16};
    return c;
}

struct ToyRun {
    std::optional<Checkpoint> svae;
    Dataset test;
};

Outcome toy_training(ToyRun& run) {
    const Dataset train_set = synth_toy_dataset(11, 400), valid = synth_toy_dataset(13, 50);
    run.test = synth_toy_dataset(12, 100);
    auto t0 = std::chrono::steady_clock::now();
    Checkpoint s = train(toy_config(ModelKind::svae), train_set, valid);
    const double s_secs = seconds_since(t0);
    const double s_acc = evaluate(s, run.test, 32, 0).accuracy;
    t0 = std::chrono::steady_clock::now();
    const Checkpoint m2 = train(toy_config(ModelKind::semivae), train_set, valid);
    const double m_secs = seconds_since(t0);
    const double m_acc = evaluate(m2, run.test, 32, 0).accuracy;
    run.svae = std::move(s);
    return {s_acc >= kToySvaeAcc && m_acc >= kToySemiAcc && s_secs < kToySeconds && m_secs < kToySeconds,
            "SVAE " + fmt(s_acc) + " % in " + fmt(s_secs, 3) + " s (need " + fmt(kToySvaeAcc) + "), SemiVAE " +
                fmt(m_acc) + " % in " + fmt(m_secs, 3) + " s (need " + fmt(kToySemiAcc) + ")"};
}

TrainConfig mnist_config(ModelKind kind) {
    TrainConfig c;
    c.model_kind = kind;
    c.beta = 0.9;
    c.alpha = 6000;
    c.batch_size = 100;
    c.epochs = 20;
    c.seed = 1;
    c.split = {10, 5};
    c.architecture.encoder_hidden = {512, 256};
    c.architecture.classifier_hidden = {64};
    return c;
}

struct MnistRun {
    std::optional<cli::DataSplits> data;
    std::optional<Checkpoint> svae;
    std::optional<double> svae_acc, semi_acc;
    double svae_secs = 0, semi_secs = 0;
};

Checkpoint train_or_load(ModelKind kind, const cli::DataSplits& data, const fs::path& cache, bool reuse,
                         double& secs) {
    if (reuse && fs::exists(cache)) {
        Checkpoint ck = load_checkpoint(cache);
        if (to_json(ck.config) == to_json([&] {
                TrainConfig c = mnist_config(kind);
                c.num_classes = ck.config.num_classes;
                c.height = ck.config.height;
                c.width = ck.config.width;
                return c;
            }())) {
            std::cout << "  reusing " << cache.string() << std::endl;
            secs = -1;
            return ck;
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    Checkpoint ck = train(mnist_config(kind), data.train, data.valid, [&](const EpochMetrics& m) {
        std::cout << "  " << to_string(kind) << " epoch " << m.epoch << " valid " << m.valid_accuracy << " %"
                  << std::endl;
    });
    secs = seconds_since(t0);
    fs::create_directories(cache.parent_path());
    save_checkpoint(ck, cache);
    return ck;
}

Outcome mnist_accuracy(MnistRun& run, const std::string& data_dir, const fs::path& work, bool reuse) {
    if (data_dir.empty()) return {false, "no MNIST directory (pass --data or set SVAE_DATA_DIR)"};
    run.data = cli::load_data(data_dir, cli::DataNeeds::all);
    Checkpoint s = train_or_load(ModelKind::svae, *run.data, work / "mnist-svae.svae", reuse, run.svae_secs);
    run.svae_acc = evaluate(s, run.data->test, 32, 0).accuracy;
    run.svae = std::move(s);
    return {*run.svae_acc >= kMnistAcc && run.svae_secs < kMnistSeconds,
            "SVAE test accuracy " + fmt(*run.svae_acc) + " % (need " + fmt(kMnistAcc) + "), " +
                (run.svae_secs < 0 ? std::string("cached checkpoint") : "training " + fmt(run.svae_secs, 4) + " s")};
}

Outcome mnist_direction(MnistRun& run, const fs::path& work, bool reuse) {
    if (!run.svae_acc) return {false, "SVAE run unavailable"};
    const Checkpoint m2 = train_or_load(ModelKind::semivae, *run.data, work / "mnist-semivae.svae", reuse, run.semi_secs);
    run.semi_acc = evaluate(m2, run.data->test, 32, 0).accuracy;
    return {*run.svae_acc >= *run.semi_acc,
            "SVAE " + fmt(*run.svae_acc) + " % vs SemiVAE " + fmt(*run.semi_acc) + " % (need SVAE >= SemiVAE)"};
}

Outcome mnist_invariance(const MnistRun& run) {
    if (!run.svae) return {false, "MNIST SVAE unavailable"};
    const SvaeModel m = run.svae->svae();
    const Dataset d = run.data->test.slice(0, kInvImages);
    const std::vector<double> sigmas{0.1, 0.5, 1.0, 2.0, 5.0};
    const RetentionCurve c = invariance_test(m, d, sigmas, kInvDraws, 0, 32);
    bool monotone = true, diverse = true;
    std::string curve;
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        curve += (k ? ", " : "") + fmt(sigmas[k], 2) + ":" + fmt(c.retention[k], 4) + "/" + fmt(c.mean_l2[k], 4);
        if (k > 0) {
            monotone = monotone && c.retention[k] <= c.retention[k - 1] + kRetentionSlack;
            diverse = diverse && c.mean_l2[k] >= c.mean_l2[k - 1];
        }
    }
    const bool at_one = c.retention[2] >= kRetentionAtOne;
    return {at_one && monotone && diverse, "sigma:retention/mean_l2 " + curve + (at_one ? "" : "; retention(1) low") +
                                               (monotone ? "" : "; retention rises") +
                                               (diverse ? "" : "; mean_l2 falls")};
}

Outcome structural_invariance(const SvaeModel& m, const Dataset& d, const std::string& which) {
    Rng rng(99);
    const std::size_t d1 = m.split.d1, dim = m.split.d1 + m.split.d2;
    std::size_t identical = 0, zero_grad = 0;
    for (std::size_t n = 0; n < kStructuralPairs; ++n) {
        const DiagonalGaussian q = encode_x(m, d.image(n % d.size()));
        std::vector<double> eps(dim);
        for (double& v : eps) v = rng.normal();
        const std::vector<double> z = reparam_sample(q, eps);
        Tensor a = Tensor::zeros({1, dim}), b = Tensor::zeros({1, dim});
        for (std::size_t j = 0; j < dim; ++j) a[j] = b[j] = z[j];
        for (std::size_t j = d1; j < dim; ++j) b[j] += 10 * rng.normal();

        Tape tape;
        SvaeGraph g(m, tape.bind_constants(m.params));
        Var za = tape.variable(a), zb = tape.variable(b);
        Var la = g.classify_latent(slice_cols(za, 0, d1)), lb = g.classify_latent(slice_cols(zb, 0, d1));
        const auto& va = la.value().values();
        const auto& vb = lb.value().values();
        const Categorical direct = classify_latent(m, std::vector<double>(z.begin(), z.begin() + d1));
        identical += std::equal(va.begin(), va.end(), vb.begin(), vb.end()) && direct.logits == std::vector<double>(va.begin(), va.end());
        tape.backward(sum(log_softmax(lb)));
        const Tensor gb = tape.grad(zb);
        bool zero = true;
        for (std::size_t j = d1; j < dim; ++j) zero = zero && gb[j] == 0.0;
        zero_grad += zero;
    }
    return {identical == kStructuralPairs && zero_grad == kStructuralPairs,
            which + ": " + std::to_string(identical) + "/" + std::to_string(kStructuralPairs) +
                " bit-identical, " + std::to_string(zero_grad) + "/" + std::to_string(kStructuralPairs) +
                " with zero z2 gradient"};
}

struct IgTally {
    std::size_t ok = 0, total = 0;
    double worst = 0;
};

IgTally ig_tally(const SvaeModel& m, const Dataset& d, std::size_t n, std::size_t steps) {
    const std::vector<double> zeros(d.input_dim(), 0.0);
    IgTally t;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = d.image(i);
        std::vector<RowFunction> fs{classifier_target(m, d.labels[i]), divergence_target(m, d.image(i + 1), 1),
                                    divergence_target(m, d.image(i + 1), 2)};
        for (const RowFunction& f : fs) {
            const auto attr = integrated_gradients(f, x, zeros, steps);
            double s = 0;
            for (double v : attr) s += v;
            const double gap = evaluate_at(f, x) - evaluate_at(f, zeros);
            const double err = std::abs(s - gap), tol = kIgRel * std::abs(gap) + kIgAbs;
            t.worst = std::max(t.worst, err / tol);
            t.ok += err <= tol;
            ++t.total;
        }
    }
    return t;
}

Outcome ig_completeness(const SvaeModel& m, const Dataset& d, const std::string& which) {
    const std::size_t n = std::min(kIgImages, d.size() - 1);
    const IgTally t = ig_tally(m, d, n, kIgSteps);
    std::string detail = which + ", " + std::to_string(n) + " images x {classifier, divergence k=1, k=2} at " +
                         std::to_string(kIgSteps) + " steps: " + std::to_string(t.ok) + "/" + std::to_string(t.total) +
                         " within tolerance, worst error/tol " + fmt(t.worst, 3);
    if (t.ok != t.total) {
        // Diagnostic only: the same sums with a finer grid.
        const IgTally fine = ig_tally(m, d, n, 16 * kIgSteps);
        detail += "; at " + std::to_string(16 * kIgSteps) + " steps " + std::to_string(fine.ok) + "/" +
                  std::to_string(fine.total) + ", worst " + fmt(fine.worst, 3);
    }
    return {t.ok == t.total, detail};
}

Outcome divergence_sanity(const SvaeModel& m, const Dataset& d, const std::string& which) {
    Rng rng(5150);
    std::size_t self_zero = 0, nonneg = 0;
    double min_d = INFINITY;
    for (std::size_t n = 0; n < kDivergencePairs; ++n) {
        const std::size_t i = rng.below(d.size()), j = rng.below(d.size()), k = 1 + n % 2;
        const RowFunction f = divergence_target(m, d.image(i), k);
        self_zero += evaluate_at(f, d.image(i)) == 0.0;
        const double v = evaluate_at(f, d.image(j));
        min_d = std::min(min_d, v);
        nonneg += v >= 0.0;
    }
    return {self_zero == kDivergencePairs && nonneg == kDivergencePairs,
            which + ": d(x,x)=0 on " + std::to_string(self_zero) + "/" + std::to_string(kDivergencePairs) +
                ", d>=0 on " + std::to_string(nonneg) + "/" + std::to_string(kDivergencePairs) + " (min " +
                fmt(min_d, 3) + ")"};
}

Outcome counterfactual_sweep(const SvaeModel& m, const Dataset& d) {
    std::size_t pairs = 0, ok = 0, z2_same = 0;
    double worst = 1;
    for (std::size_t src = 0; src < m.num_classes; ++src) {
        std::size_t i = 0;
        while (i < d.size() && d.labels[i] != src) ++i;
        if (i == d.size()) return {false, "no test image of class " + std::to_string(src)};
        for (std::size_t t = 0; t < m.num_classes; ++t) {
            if (t == src) continue;
            const CounterfactualResult r = counterfactual(m, d.image(i), t, kCounterfactualIters);
            ++pairs;
            ok += r.target_probability >= kCounterfactualP && r.iterations <= kCounterfactualIters;
            worst = std::min(worst, r.target_probability);
            z2_same += std::equal(r.z.begin() + m.split.d1, r.z.end(), r.z_start.begin() + m.split.d1);
        }
    }
    return {ok == pairs && z2_same == pairs, std::to_string(ok) + "/" + std::to_string(pairs) +
                                                 " pairs reach p >= " + fmt(kCounterfactualP) + " (lowest " +
                                                 fmt(worst, 4) + "), z2 unchanged on " + std::to_string(z2_same) +
                                                 "/" + std::to_string(pairs)};
}

std::map<std::string, std::string> read_outputs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.path().extension() != ".csv") continue;
        std::ifstream f(e.path(), std::ios::binary);
        out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(f), {}};
    }
    return out;
}

Outcome cli_determinism(const fs::path& work) {
    const fs::path root = work / "cli";
    fs::remove_all(root);
    std::ostringstream sink;
    auto run_twice = [&](const std::string& name, std::vector<std::string> args) {
        std::map<std::string, std::string> out[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path dir = root / (name + "-" + std::to_string(rep));
            auto a = args;
            a.insert(a.end(), {"--run-dir", dir.string()});
            if (cli::run(a, sink, sink) != 0) throw std::runtime_error(name + " failed");
            out[rep] = read_outputs(dir);
        }
        return !out[0].empty() && out[0] == out[1];
    };
    std::vector<std::string> same;
    auto check = [&](const std::string& name, std::vector<std::string> args) {
        if (run_twice(name, std::move(args))) same.push_back(name);
    };
    check("train", {"train", "--data", "toy", "--alpha", "50", "--epochs", "3", "--d1", "4", "--d2", "3", "--hidden",
                    "64,32", "--cls-hidden", "16", "--batch", "32", "--seeds", "1,2", "--quiet"});
    const std::string ck = (root / "train-0" / "seed-1" / "checkpoint.svae").string();
    check("eval", {"eval", "--checkpoint", ck, "--data", "toy"});
    check("invariance", {"invariance", "--checkpoint", ck, "--data", "toy", "--count", "100"});
    check("explore", {"explore", "--checkpoint", ck, "--data", "toy", "--dims", "0,2"});
    for (const char* method : {"saliency", "ixg", "ig", "gradshap"})
        check(std::string("explain-") + method, {"explain", "--checkpoint", ck, "--data", "toy", "--method", method,
                                                 "--target", "divergence:k=2", "--ref-index", "9"});
    check("counterfactual", {"counterfactual", "--checkpoint", ck, "--data", "toy"});
    const std::size_t expected = 9;
    std::string names;
    for (const auto& s : same) names += (names.empty() ? "" : " ") + s;
    return {same.size() == expected,
            std::to_string(same.size()) + "/" + std::to_string(expected) + " commands byte-identical (" + names + ")"};
}

Outcome invariant_divergence(const MnistRun& run) {
    if (!run.svae) return {false, "MNIST SVAE unavailable"};
    const SvaeModel m = run.svae->svae();
    const Dataset d = run.data->test.slice(0, 300);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::size_t j = (i + 1) % d.size();
        while (d.labels[j] != d.labels[i]) j = (j + 1) % d.size();
        const DiagonalGaussian q = encode_x(m, d.image(i));
        const auto rec = decode_image(m, q.mean);
        const RowFunction f = divergence_target(m, d.image(i), 2);
        ok += evaluate_at(f, rec) <= evaluate_at(f, d.image(j));
    }
    const double share = double(ok) / double(d.size());
    return {share >= kInvariantDivergenceShare, "k=2 divergence of the posterior-mean reconstruction below a same-class "
                                                "test image on " +
                                                    std::to_string(ok) + "/" + std::to_string(d.size()) + " (need " +
                                                    fmt(kInvariantDivergenceShare) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks for the SVAE toolkit", "svae_acceptance"};
    const char* env = std::getenv("SVAE_DATA_DIR");
    std::string data_dir = env ? env : "";
    std::string work = "acceptance-work";
    bool reuse = false;
    app.add_option("--data", data_dir, "MNIST directory")->capture_default_str();
    app.add_option("--work-dir", work, "Scratch directory for checkpoints and CLI runs")->capture_default_str();
    app.add_flag("--reuse", reuse, "Load MNIST checkpoints from --work-dir when their config matches");
    CLI11_PARSE(app, argc, argv);

    report("gradient correctness", gradient_correctness);
    report("KL/entropy oracles", kl_entropy_oracles);
    ToyRun toy;
    report("toy-dataset training", [&] { return toy_training(toy); });
    MnistRun mnist;
    report("desk-scale MNIST accuracy", [&] { return mnist_accuracy(mnist, data_dir, work, reuse); });
    report("desk-scale MNIST SVAE >= SemiVAE", [&] { return mnist_direction(mnist, work, reuse); });
    report("invariance test", [&] { return mnist_invariance(mnist); });

    // The MNIST model when it trained, the toy model otherwise.
    const bool have_mnist = mnist.svae.has_value();
    if (!have_mnist && !toy.svae) {
        std::cout << "no trained model available" << std::endl;
        return 1;
    }
    const SvaeModel probe = have_mnist ? mnist.svae->svae() : toy.svae->svae();
    const Dataset& probe_data = have_mnist ? mnist.data->test : toy.test;
    const std::string which = have_mnist ? "MNIST SVAE" : "toy SVAE";
    report("structural invariance", [&] { return structural_invariance(probe, probe_data, which); });
    report("IG completeness", [&] { return ig_completeness(probe, probe_data, which); });
    report("divergence target sanity", [&] { return divergence_sanity(probe, probe_data, which); });
    report("counterfactual sweep", [&] {
        if (!toy.svae) return Outcome{false, "toy SVAE unavailable"};
        return counterfactual_sweep(toy.svae->svae(), toy.test);
    });
    report("CLI determinism", [&] { return cli_determinism(work); });
    report("supplementary: invariant divergence (k=2)", [&] { return invariant_divergence(mnist); });

    std::size_t failed = 0;
    for (const auto& [name, o] : results) failed += !o.pass;
    std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
