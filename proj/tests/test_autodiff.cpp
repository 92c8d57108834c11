#include <doctest.h>

#include <cmath>

#include "svae/autodiff.hpp"
#include "svae/errors.hpp"
#include "svae/mlp.hpp"
#include "test_util.hpp"

using namespace svae;
using namespace svae::testing;

namespace {

MlpVars bind_mlp(Tape& tape, const ParameterSet& params, const std::string& prefix, const MlpSpec& spec,
                 BoundParameters& bound) {
    bound = tape.bind(params);
    return mlp_vars(bound, prefix, spec);
}

// Plain loops, independent of the tape and of Eigen.
std::vector<double> reference_mlp(const ParameterSet& params, const std::string& prefix, const MlpSpec& spec,
                                  std::vector<double> h) {
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const Tensor& w = params.at(weight_name(prefix, l));
        const Tensor& b = params.at(bias_name(prefix, l));
        std::vector<double> next(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double acc = b[j];
            for (std::size_t i = 0; i < w.rows(); ++i) acc += h[i] * w.at(i, j);
            if (l + 1 < spec.num_layers()) {
                switch (spec.hidden_activation) {
                    case Activation::relu: acc = acc > 0 ? acc : 0; break;
                    case Activation::tanh: acc = std::tanh(acc); break;
                    case Activation::softplus: acc = std::log1p(std::exp(acc)); break;
                }
            } else if (spec.output_activation == OutputActivation::sigmoid) {
                acc = 1.0 / (1.0 + std::exp(-acc));
            }
            next[j] = acc;
        }
        h = std::move(next);
    }
    return h;
}

}  // namespace

TEST_CASE("identity network passes its input through") {
    MlpSpec spec{{3, 3}, Activation::relu, OutputActivation::identity};
    ParameterSet params;
    params["net.0.weight"] = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    params["net.0.bias"] = Tensor::zeros({1, 3});
    Tape tape;
    BoundParameters bound;
    const MlpVars vars = bind_mlp(tape, params, "net", spec, bound);
    const Tensor v = Tensor::matrix(1, 3, {-1.5, 0.25, 7.0});
    CHECK(forward(spec, vars, tape.constant(v)).value() == v);
}

TEST_CASE("zero weights leave relu(bias)") {
    // relu applies to hidden layers, so the [2, 3] layer is followed by an identity layer.
    MlpSpec two{{2, 3, 3}, Activation::relu, OutputActivation::identity};
    ParameterSet params;
    params["net.0.weight"] = Tensor::zeros({2, 3});
    params["net.0.bias"] = Tensor::matrix(1, 3, {-1.0, 0.5, 2.0});
    params["net.1.weight"] = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    params["net.1.bias"] = Tensor::zeros({1, 3});
    Tape tape;
    BoundParameters bound;
    const MlpVars vars = bind_mlp(tape, params, "net", two, bound);
    const Tensor out = forward(two, vars, tape.constant(Tensor::matrix(1, 2, {3.0, -4.0}))).value();
    CHECK(out == Tensor::matrix(1, 3, {0.0, 0.5, 2.0}));
}

TEST_CASE("random three-layer network matches a loop-based reference") {
    MlpSpec spec{{5, 7, 6, 4}, Activation::tanh, OutputActivation::sigmoid};
    ParameterSet params;
    Rng rng(42);
    init_mlp(params, "net", spec, rng, false);
    for (auto& [name, t] : params) {
        if (name.ends_with("bias")) rng.fill_normal(t.values(), 0.1);
    }
    Tape tape;
    BoundParameters bound;
    const MlpVars vars = bind_mlp(tape, params, "net", spec, bound);
    const Tensor out = forward(spec, vars, tape.constant(Tensor::filled({1, 5}, 1.0))).value();
    const auto expected = reference_mlp(params, "net", spec, std::vector<double>(5, 1.0));
    REQUIRE(out.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-13));
}

TEST_CASE("forward rejects a mismatched input width and names the layer") {
    MlpSpec spec{{4, 3, 2}, Activation::relu, OutputActivation::identity};
    ParameterSet params;
    Rng rng(1);
    init_mlp(params, "net", spec, rng);
    Tape tape;
    BoundParameters bound;
    const MlpVars vars = bind_mlp(tape, params, "net", spec, bound);
    try {
        forward(spec, vars, tape.constant(Tensor::zeros({1, 5})));
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
}

TEST_CASE("forward is deterministic") {
    MlpSpec spec{{6, 8, 3}, Activation::softplus, OutputActivation::identity};
    ParameterSet params;
    Rng rng(3);
    init_mlp(params, "net", spec, rng, false);
    const Tensor x = random_tensor(rng, 4, 6);
    auto run = [&] {
        Tape tape;
        BoundParameters bound;
        const MlpVars vars = bind_mlp(tape, params, "net", spec, bound);
        return forward(spec, vars, tape.constant(x)).value();
    };
    CHECK(run() == run());
}

TEST_CASE("gradient of sum(x W) with respect to W repeats x in every column") {
    Tape tape;
    const Tensor x = Tensor::matrix(1, 3, {1.0, -2.0, 0.5});
    Var w = tape.parameter("w", Tensor::filled({3, 2}, 0.3));
    const Gradients g = tape.backward(sum(matmul(tape.constant(x), w)));
    CHECK(g.at("w") == Tensor::matrix(3, 2, {1.0, 1.0, -2.0, -2.0, 0.5, 0.5}));
}

TEST_CASE("a constant loss gives zero gradients for every parameter") {
    Tape tape;
    Var w = tape.parameter("w", Tensor::filled({2, 2}, 1.0));
    tape.parameter("unused", Tensor::filled({1, 3}, 2.0));
    Var c = tape.constant(Tensor::scalar(4.0));
    (void)w;
    const Gradients g = tape.backward(c);
    CHECK(g.at("w") == Tensor::zeros({2, 2}));
    CHECK(g.at("unused") == Tensor::zeros({1, 3}));
}

TEST_CASE("unreachable parameters map to zeros") {
    Tape tape;
    Var a = tape.parameter("a", Tensor::filled({1, 2}, 1.5));
    tape.parameter("b", Tensor::filled({1, 2}, 1.5));
    const Gradients g = tape.backward(sum(a * a));
    CHECK(g.at("a") == Tensor::filled({1, 2}, 3.0));
    CHECK(g.at("b") == Tensor::zeros({1, 2}));
}

TEST_CASE("backward on a non-scalar loss is a contract violation") {
    Tape tape;
    Var a = tape.variable(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(tape.backward(a), ContractError);
}

TEST_CASE("two-layer network gradients match central differences") {
    MlpSpec spec{{4, 6, 3}, Activation::tanh, OutputActivation::identity};
    ParameterSet params;
    Rng rng(7);
    init_mlp(params, "net", spec, rng, false);
    const Tensor x = random_tensor(rng, 5, 4);

    auto loss_of = [&](const ParameterSet& p) {
        Tape tape;
        BoundParameters bound = tape.bind_constants(p);
        Var out = forward(spec, mlp_vars(bound, "net", spec), tape.constant(x));
        return mean(out * out).value().item();
    };
    Tape tape;
    BoundParameters bound = tape.bind(params);
    Var out = forward(spec, mlp_vars(bound, "net", spec), tape.constant(x));
    const Gradients g = tape.backward(mean(out * out));

    for (const auto& [name, value] : params) {
        const Tensor numeric = finite_difference(
            [&](const Tensor& probe) {
                ParameterSet p = params;
                p[name] = probe;
                return loss_of(p);
            },
            value, 1e-5);
        CHECK_MESSAGE(relative_error(g.at(name), numeric) <= 1e-6, name);
    }
}

TEST_CASE("finite_difference on analytic functions") {
    const Tensor x = Tensor::matrix(1, 4, {0.3, -1.0, 2.0, 5.0});
    const Tensor ones = finite_difference(
        [](const Tensor& t) {
            double s = 0;
            for (double v : t.values()) s += v;
            return s;
        },
        x, 1e-5);
    for (double v : ones.values()) CHECK(std::abs(v - 1.0) <= 1e-9);

    const Tensor sq = finite_difference(
        [](const Tensor& t) {
            double s = 0;
            for (double v : t.values()) s += v * v;
            return s;
        },
        Tensor::matrix(1, 2, {1.0, 2.0}), 1e-5);
    CHECK(std::abs(sq[0] - 2.0) <= 1e-6);
    CHECK(std::abs(sq[1] - 4.0) <= 1e-6);
}

TEST_CASE("finite_difference propagates NaN") {
    const Tensor g = finite_difference([](const Tensor&) { return std::nan(""); }, Tensor::zeros({1, 2}), 1e-5);
    CHECK_FALSE(g.all_finite());
}

TEST_CASE("every primitive matches central differences on random inputs") {
    Rng rng(2024);
    auto away_from_zero = [](Tensor t) {
        for (double& v : t.values()) {
            if (std::abs(v) < 1e-2) v = v < 0 ? -0.1 : 0.1;
        }
        return t;
    };
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t r = 1 + rng.below(3), c = 1 + rng.below(4), k = 1 + rng.below(3);
        const Tensor a = random_tensor(rng, r, c);
        const Tensor other = random_tensor(rng, r, c);
        const Tensor row = random_tensor(rng, 1, c);
        const Tensor col = random_tensor(rng, r, 1);
        const Tensor right = random_tensor(rng, c, k);
        Tensor positive = a;
        for (double& v : positive.values()) v = 0.5 + std::abs(v);

        auto weighted = [&](Var v) {
            // A fixed random projection so that every output entry carries a distinct weight.
            Rng w(static_cast<std::uint64_t>(trial));
            Tensor weights = random_tensor(w, v.rows(), v.cols());
            return sum(v * v.tape().constant(weights));
        };
        const double tol = 1e-6;
        CHECK(gradient_check([&](Var x) { return weighted(matmul(x, x.tape().constant(right))); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(matmul(x.tape().constant(a), x)); }, right) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(add(x, x.tape().constant(other))); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(sub(x.tape().constant(other), x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(mul(x, x.tape().constant(other))); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(add(x.tape().constant(a), x)); }, row) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(mul(x.tape().constant(a), x)); }, col) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(exp(x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(log(x)); }, positive) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(tanh(x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(relu(x)); }, away_from_zero(a)) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(softplus(x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(sigmoid(x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return sum(x * x) * sum(x); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(row_sum(x * x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return mean(x * x); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(slice_cols(x * x, 0, 1)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(concat_cols(x * x, x)); }, a) <= tol);
        CHECK(gradient_check([&](Var x) { return weighted(tile_rows(x * x, 3)); }, a) <= tol);
    }
}

TEST_CASE("structural helpers") {
    Tape tape;
    Var a = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK(slice_cols(a, 1, 3).value() == Tensor::matrix(2, 2, {2, 3, 5, 6}));
    CHECK(slice_rows(a, 1, 2).value() == Tensor::matrix(1, 3, {4, 5, 6}));
    CHECK(tile_rows(slice_rows(a, 0, 1), 2).value() == Tensor::matrix(2, 3, {1, 2, 3, 1, 2, 3}));
    CHECK(concat_cols(a, slice_cols(a, 0, 1)).value() == Tensor::matrix(2, 4, {1, 2, 3, 1, 4, 5, 6, 4}));
    CHECK_THROWS_AS(slice_cols(a, 2, 5), DimensionError);
    CHECK_THROWS_AS(add(a, tape.constant(Tensor::zeros({3, 3}))), DimensionError);
}

TEST_CASE("tensor construction checks its invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 2}, {}), DimensionError);
    CHECK(Tensor::matrix(2, 1, {1.0, 2.0}).rows() == 2);
}
