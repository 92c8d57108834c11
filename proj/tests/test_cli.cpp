#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "svae/cli.hpp"
#include "svae/csv.hpp"
#include "svae/image_io.hpp"
#include "svae/service.hpp"

using namespace svae;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "svae_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> toy_train_args(const fs::path& dir, int epochs = 4) {
    return {"train", "--data", "toy", "--alpha", "50", "--epochs", std::to_string(epochs), "--d1", "4", "--d2", "3", "--hidden", "32,16",
            "--cls-hidden", "16", "--batch", "32", "--seed", "7", "--quiet", "--run-dir", dir.string()};
}

/// Trained once and shared by the tests below.
fs::path toy_checkpoint() {
    static const fs::path ck = [] {
        const fs::path dir = scratch() / "toy";
        const Result r = run(toy_train_args(dir));
        REQUIRE(r.code == 0);
        return dir / "checkpoint.svae";
    }();
    return ck;
}

/// Every CSV and PNG a command writes into dir.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (ext == ".csv" || ext == ".svae") out[fs::relative(e.path(), dir).string()] = read_text(e.path());
        if (ext == ".png") {
            const std::string bytes = read_text(e.path());
            const Raster r = decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
            out[fs::relative(e.path(), dir).string()] =
                std::to_string(r.height) + "x" + std::to_string(r.width) + ":" + std::string(r.pixels.begin(), r.pixels.end());
        }
    }
    return out;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    const Result empty = run({});
    CHECK(empty.code == 2);
    CHECK(empty.err.find("Usage") != std::string::npos);

    const Result beta = run({"train", "--data", "toy", "--beta", "1.5"});
    CHECK(beta.code == 2);
    CHECK(beta.err.find("(0, 1)") != std::string::npos);
    CHECK(run({"train", "--data", "toy", "--beta", "0"}).code == 2);
    CHECK(run({"train", "--data", "toy", "--beta", "abc"}).code == 2);
    CHECK(run({"train", "--bogus"}).code == 2);
    CHECK(run({"eval", "--data", "toy"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"train", "--epochs", "x"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("runtime failures exit with status 1") {
    const Result missing = run({"eval", "--checkpoint", (scratch() / "nope.svae").string(), "--data", "toy",
                                "--run-dir", (scratch() / "nope").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error") != std::string::npos);
    const std::string ck = toy_checkpoint().string();
    CHECK(run({"explore", "--checkpoint", ck, "--data", "toy", "--dims", "0,9", "--run-dir", (scratch() / "bad").string()})
              .code == 1);
    CHECK(run({"explain", "--checkpoint", ck, "--data", "toy", "--target", "divergence:k=1", "--run-dir",
               (scratch() / "bad").string()})
              .code == 1);
    CHECK(run({"counterfactual", "--checkpoint", ck, "--data", "toy", "--index", "100000", "--run-dir",
               (scratch() / "bad").string()})
              .code == 1);
}

TEST_CASE("train writes a run directory") {
    const fs::path dir = toy_checkpoint().parent_path();
    for (const char* f : {"config.json", "checkpoint.svae", "metrics.csv", "seeds.csv", "summary.csv"})
        CHECK(fs::exists(dir / f));
    const auto cfg = nlohmann::json::parse(read_text(dir / "config.json"));
    CHECK(cfg["command"] == "train");
    CHECK(cfg["options"]["alpha"] == "50");
    CHECK(cfg["train_config"]["split"]["d1"] == 4);
    CHECK(lines(read_text(dir / "metrics.csv")).size() == 5);
}

TEST_CASE("seed sweep reports mean and standard deviation") {
    const fs::path dir = scratch() / "sweep";
    auto args = toy_train_args(dir, 1);
    args.insert(args.end(), {"--seeds", "1,2,3"});
    const Result r = run(args);
    REQUIRE(r.code == 0);
    const auto rows = lines(read_text(dir / "seeds.csv"));
    REQUIRE(rows.size() == 4);
    std::vector<double> acc;
    for (std::size_t i = 1; i < rows.size(); ++i) acc.push_back(std::stod(rows[i].substr(rows[i].find(',') + 1)));
    const double mean = (acc[0] + acc[1] + acc[2]) / 3;
    double var = 0;
    for (double a : acc) var += (a - mean) * (a - mean);
    const auto summary = lines(read_text(dir / "summary.csv"));
    CHECK(summary[0] == "metric,mean,std,n");
    CHECK(summary[1] == "test_accuracy," + format_double(mean) + "," + format_double(std::sqrt(var / 2)) + ",3");
    for (int s : {1, 2, 3}) CHECK(fs::exists(dir / ("seed-" + std::to_string(s)) / "checkpoint.svae"));
}

TEST_CASE("every command is reproducible") {
    const std::string ck = toy_checkpoint().string();
    const std::vector<std::vector<std::string>> commands{
        {"eval", "--checkpoint", ck, "--data", "toy", "--samples", "8"},
        {"invariance", "--checkpoint", ck, "--data", "toy", "--count", "40", "--per-sigma", "2", "--samples", "8",
         "--examples", "3"},
        {"explore", "--checkpoint", ck, "--data", "toy", "--index", "7", "--dims", "1,2", "--step", "0.5", "--radius",
         "2"},
        {"explain", "--checkpoint", ck, "--data", "toy", "--index", "3", "--method", "gradshap", "--target",
         "divergence:k=2", "--ref-index", "4", "--shap-samples", "30"},
        {"explain", "--checkpoint", ck, "--data", "toy", "--index", "5", "--method", "ig", "--target", "classifier:1"},
        {"counterfactual", "--checkpoint", ck, "--data", "toy", "--index", "2", "--max-iters", "50"}};
    int k = 0;
    for (auto cmd : commands) {
        std::map<std::string, std::string> outputs[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path dir = scratch() / ("repro-" + std::to_string(k) + "-" + std::to_string(rep));
            auto args = cmd;
            args.insert(args.end(), {"--run-dir", dir.string()});
            const Result r = run(args);
            CAPTURE(cmd[0]);
            REQUIRE(r.code == 0);
            outputs[rep] = artifacts(dir);
        }
        CHECK(!outputs[0].empty());
        CHECK(outputs[0] == outputs[1]);
        ++k;
    }
    // Training itself.
    std::map<std::string, std::string> trained[2];
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path dir = scratch() / ("repro-train-" + std::to_string(rep));
        REQUIRE(run(toy_train_args(dir, 2)).code == 0);
        trained[rep] = artifacts(dir);
    }
    CHECK(trained[0] == trained[1]);
}

TEST_CASE("command outputs have the documented shape") {
    const std::string ck = toy_checkpoint().string();
    const fs::path ev = scratch() / "eval";
    const Result e = run({"eval", "--checkpoint", ck, "--data", "toy", "--run-dir", ev.string()});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("accuracy: ") == 0);
    CHECK(e.out.find("\nR: ") != std::string::npos);
    CHECK(lines(read_text(ev / "predictions.csv")).size() == 401);

    const fs::path inv = scratch() / "inv";
    REQUIRE(run({"invariance", "--checkpoint", ck, "--data", "toy", "--sigmas", "0.1,0.5,1.0,2.0,5.0", "--count", "20",
                 "--run-dir", inv.string()})
                .code == 0);
    const auto rows = lines(read_text(inv / "retention.csv"));
    CHECK(rows.size() == 6);
    CHECK(rows[0] == "sigma,retention,mean_l2");

    const fs::path grid = scratch() / "grid";
    REQUIRE(run({"explore", "--checkpoint", ck, "--data", "toy", "--index", "7", "--dims", "1,2", "--step", "0.5",
                 "--radius", "2", "--run-dir", grid.string()})
                .code == 0);
    const std::string png = read_text(grid / "grid.png");
    const Raster r = decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
    CHECK(r.height == 5 * 64 + 6);
    CHECK(r.width == 5 * 64 + 6);

    const fs::path cf = scratch() / "cf";
    REQUIRE(run({"counterfactual", "--checkpoint", ck, "--data", "toy", "--index", "1", "--run-dir", cf.string()}).code ==
            0);
    CHECK(lines(read_text(cf / "counterfactuals.csv")).size() == 5);
}

TEST_CASE("data directory defaults to the environment") {
    const std::string ck = toy_checkpoint().string();
    const char* saved = std::getenv("SVAE_DATA_DIR");
    const std::string restore = saved ? saved : "";
    ::setenv("SVAE_DATA_DIR", "toy", 1);
    const Result r = run({"eval", "--checkpoint", ck, "--samples", "4", "--run-dir", (scratch() / "env").string()});
    ::unsetenv("SVAE_DATA_DIR");
    CHECK(r.code == 0);
    CHECK(run({"eval", "--checkpoint", ck, "--run-dir", (scratch() / "env").string()}).code == 1);
    if (saved) ::setenv("SVAE_DATA_DIR", restore.c_str(), 1);
}

TEST_CASE("CLI and service agree") {
    const std::string ck = toy_checkpoint().string();
    const cli::DataSplits data = cli::load_data("toy", cli::DataNeeds::train_and_test);
    const service::Snapshot snap = service::Snapshot::from_checkpoint(load_checkpoint(ck), data.test, data.train);

    const fs::path dir = scratch() / "agree";
    REQUIRE(run({"explain", "--checkpoint", ck, "--data", "toy", "--index", "6", "--method", "gradshap", "--target",
                 "classifier:2", "--seed", "5", "--run-dir", dir.string()})
                .code == 0);
    const auto x = data.test.image(6);
    const service::Response r = service::handle_attribute(
        snap, {{"image", std::vector<double>(x.begin(), x.end())}, {"method", "gradshap"}, {"target", "classifier"},
               {"class", 2}, {"seed", 5}});
    REQUIRE(r.status == 200);
    std::ostringstream csv;
    write_csv_row(csv, r.body["attributions"].get<std::vector<double>>());
    CHECK(csv.str() == read_text(dir / "attribution.csv"));

    const fs::path ev = scratch() / "agree-eval";
    REQUIRE(run({"eval", "--checkpoint", ck, "--data", "toy", "--seed", "3", "--run-dir", ev.string()}).code == 0);
    const auto preds = lines(read_text(ev / "predictions.csv"));
    for (std::size_t i : {0, 17, 123, 399}) {
        const auto img = data.test.image(i);
        const service::Response enc =
            service::handle_encode(snap, {{"image", std::vector<double>(img.begin(), img.end())}, {"seed", 3}});
        CHECK(preds[i + 1].substr(preds[i + 1].rfind(',') + 1) == std::to_string(enc.body["predicted_class"].get<int>()));
    }
}
