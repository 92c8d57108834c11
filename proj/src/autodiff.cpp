#include "svae/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "svae/errors.hpp"

namespace svae {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }

Tensor matrix_like(std::size_t rows, std::size_t cols) { return Tensor::zeros({rows, cols}); }

std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* what) {
    if (a == b || b == 1) return a;
    if (a == 1) return b;
    throw DimensionError(std::string("cannot broadcast ") + what + ": " + std::to_string(a) + " vs " +
                         std::to_string(b));
}

template <class F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, F f) {
    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    const std::size_t rows = broadcast_dim(ar, br, "rows");
    const std::size_t cols = broadcast_dim(ac, bc, "columns");
    Tensor out = matrix_like(rows, cols);
    if (ar == br && ac == bc) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    for (std::size_t r = 0; r < rows; ++r) {
        const double* pa = a.data() + (ar == 1 ? 0 : r * ac);
        const double* pb = b.data() + (br == 1 ? 0 : r * bc);
        double* po = out.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) po[c] = f(pa[ac == 1 ? 0 : c], pb[bc == 1 ? 0 : c]);
    }
    return out;
}

// Sums a broadcast gradient back down to the operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& like) {
    const std::size_t rows = like.rows(), cols = like.cols();
    if (g.rows() == rows && g.cols() == cols) return g.reshaped(like.shape());
    Tensor out = Tensor::zeros(like.shape());
    const std::size_t gc = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
        const std::size_t orow = rows == 1 ? 0 : r;
        for (std::size_t c = 0; c < gc; ++c) out[orow * cols + (cols == 1 ? 0 : c)] += g[r * gc + c];
    }
    return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
    Tensor out = matrix_like(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::variable(Tensor value) { return push(std::move(value), true); }

Var Tape::parameter(const std::string& name, Tensor value) {
    Var v = push(std::move(value), true);
    parameters_.emplace_back(name, v.id());
    return v;
}

BoundParameters Tape::bind(const ParameterSet& params) {
    BoundParameters bound;
    for (const auto& [name, value] : params) bound.emplace(name, parameter(name, value));
    return bound;
}

BoundParameters Tape::bind_constants(const ParameterSet& params) {
    BoundParameters bound;
    for (const auto& [name, value] : params) bound.emplace(name, constant(value));
    return bound;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape_ != this) throw ContractError("operation mixes values from different tapes");
        needs = needs || nodes_[in.id()].requires_grad;
    }
    Var out = push(std::move(value), needs);
    if (needs) nodes_.back().backprop = std::move(backprop);
    return out;
}

void Tape::accumulate(Var v, const Tensor& g) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.grad.empty()) {
        node.grad = g.reshaped(node.value.shape());
        return;
    }
    if (node.grad.size() != g.size()) throw DimensionError("gradient shape mismatch during accumulation");
    auto dst = node.grad.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(Var loss) {
    if (loss.tape_ != this) throw ContractError("loss was not recorded on this tape");
    if (nodes_[loss.id()].value.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            shape_string(nodes_[loss.id()].value.shape()));
    }
    for (auto& node : nodes_) node.grad = Tensor();
    if (nodes_[loss.id()].requires_grad) {
        nodes_[loss.id()].grad = Tensor::filled(nodes_[loss.id()].value.shape(), 1.0);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (node.grad.empty() || !node.backprop) continue;
            node.backprop(*this, node.grad);
        }
    }
    Gradients grads;
    for (const auto& [name, id] : parameters_) grads.insert_or_assign(name, grad(Var(this, id)));
    return grads;
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_[v.id()];
    if (node.grad.empty()) return Tensor::zeros(node.value.shape());
    return node.grad;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul inner dimensions differ: " + shape_string(av.shape()) + " x " +
                             shape_string(bv.shape()));
    }
    Tensor out = matrix_like(av.rows(), bv.cols());
    MutMap(out.data(), out.rows(), out.cols()).noalias() = as_matrix(av) * as_matrix(bv);
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor ga = matrix_like(av.rows(), av.cols());
            MutMap(ga.data(), ga.rows(), ga.cols()).noalias() = as_matrix(g) * as_matrix(bv).transpose();
            t.accumulate(a, ga);
        }
        if (t.requires_grad(b)) {
            Tensor gb = matrix_like(bv.rows(), bv.cols());
            MutMap(gb.data(), gb.rows(), gb.cols()).noalias() = as_matrix(av).transpose() * as_matrix(g);
            t.accumulate(b, gb);
        }
    });
}

Var add(Var a, Var b) {
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x + y; });
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.accumulate(a, reduce_to(g, t.value(a)));
        if (t.requires_grad(b)) t.accumulate(b, reduce_to(g, t.value(b)));
    });
}

Var sub(Var a, Var b) {
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x - y; });
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.accumulate(a, reduce_to(g, t.value(a)));
        if (t.requires_grad(b)) t.accumulate(b, reduce_to(map(g, [](double x) { return -x; }), t.value(b)));
    });
}

Var mul(Var a, Var b) {
    Tensor out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x * y; });
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        auto times = [](double x, double y) { return x * y; };
        if (t.requires_grad(a)) t.accumulate(a, reduce_to(broadcast_apply(g, t.value(b), times), t.value(a)));
        if (t.requires_grad(b)) t.accumulate(b, reduce_to(broadcast_apply(g, t.value(a), times), t.value(b)));
    });
}

Var exp(Var a) {
    Tensor out = map(a.value(), [](double x) { return std::exp(x); });
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * std::exp(x[i]);
        t.accumulate(a, ga);
    });
}

Var log(Var a) {
    Tensor out = map(a.value(), [](double x) { return std::log(x); });
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] / x[i];
        t.accumulate(a, ga);
    });
}

Var tanh(Var a) {
    Tensor out = map(a.value(), [](double x) { return std::tanh(x); });
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double th = std::tanh(x[i]);
            ga[i] = g[i] * (1.0 - th * th);
        }
        t.accumulate(a, ga);
    });
}

Var relu(Var a) {
    Tensor out = map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
        t.accumulate(a, ga);
    });
}

Var softplus(Var a) {
    Tensor out = map(a.value(), stable_softplus);
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * stable_sigmoid(x[i]);
        t.accumulate(a, ga);
    });
}

Var sigmoid(Var a) {
    Tensor out = map(a.value(), stable_sigmoid);
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double s = stable_sigmoid(x[i]);
            ga[i] = g[i] * s * (1.0 - s);
        }
        t.accumulate(a, ga);
    });
}

Var sum(Var a) {
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    return a.tape().record(Tensor::scalar(total), {a}, [a](Tape& t, const Tensor& g) {
        t.accumulate(a, Tensor::filled(t.value(a).shape(), g[0]));
    });
}

Var row_sum(Var a) {
    const Tensor& x = a.value();
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor out = matrix_like(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c];
        out[r] = s;
    }
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const std::size_t rows = x.rows(), cols = x.cols();
        Tensor ga = matrix_like(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = g[r];
        }
        t.accumulate(a, ga);
    });
}

Var mean(Var a) {
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    const double n = static_cast<double>(a.value().size());
    return a.tape().record(Tensor::scalar(total / n), {a}, [a, n](Tape& t, const Tensor& g) {
        t.accumulate(a, Tensor::filled(t.value(a).shape(), g[0] / n));
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    const std::size_t rows = x.rows(), cols = x.cols();
    if (begin >= end || end > cols) {
        throw DimensionError("column slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for width " + std::to_string(cols));
    }
    const std::size_t w = end - begin;
    Tensor out = matrix_like(rows, w);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data() + r * cols + begin, w, out.data() + r * w);
    }
    return a.tape().record(std::move(out), {a}, [a, begin, w](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const std::size_t rows = x.rows(), cols = x.cols();
        Tensor ga = matrix_like(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(g.data() + r * w, w, ga.data() + r * cols + begin);
        t.accumulate(a, ga);
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    const std::size_t rows = x.rows(), cols = x.cols();
    if (begin >= end || end > rows) {
        throw DimensionError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for height " + std::to_string(rows));
    }
    Tensor out = matrix_like(end - begin, cols);
    std::copy_n(x.data() + begin * cols, (end - begin) * cols, out.data());
    return a.tape().record(std::move(out), {a}, [a, begin](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        std::copy_n(g.data(), g.size(), ga.data() + begin * x.cols());
        t.accumulate(a, ga);
    });
}

Var concat_cols(Var a, Var b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows() != y.rows()) {
        throw DimensionError("concat_cols row counts differ: " + std::to_string(x.rows()) + " vs " +
                             std::to_string(y.rows()));
    }
    const std::size_t rows = x.rows(), xc = x.cols(), yc = y.cols();
    Tensor out = matrix_like(rows, xc + yc);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data() + r * xc, xc, out.data() + r * (xc + yc));
        std::copy_n(y.data() + r * yc, yc, out.data() + r * (xc + yc) + xc);
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, rows, xc, yc](Tape& t, const Tensor& g) {
        Tensor ga = matrix_like(rows, xc);
        Tensor gb = matrix_like(rows, yc);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(g.data() + r * (xc + yc), xc, ga.data() + r * xc);
            std::copy_n(g.data() + r * (xc + yc) + xc, yc, gb.data() + r * yc);
        }
        t.accumulate(a, ga);
        t.accumulate(b, gb);
    });
}

Var tile_rows(Var a, std::size_t times) {
    const Tensor& x = a.value();
    if (times == 0) throw DimensionError("tile_rows needs at least one copy");
    Tensor out = matrix_like(x.rows() * times, x.cols());
    for (std::size_t k = 0; k < times; ++k) std::copy_n(x.data(), x.size(), out.data() + k * x.size());
    return a.tape().record(std::move(out), {a}, [a, times](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga = matrix_like(x.rows(), x.cols());
        for (std::size_t k = 0; k < times; ++k) {
            for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[k * x.size() + i];
        }
        t.accumulate(a, ga);
    });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator-(Var a) { return -1.0 * a; }
Var operator*(double s, Var a) { return mul(a.tape().constant(Tensor::scalar(s)), a); }
Var operator+(Var a, double s) { return add(a, a.tape().constant(Tensor::scalar(s))); }
Var operator-(Var a, double s) { return sub(a, a.tape().constant(Tensor::scalar(s))); }

Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw DomainError("finite-difference step must be positive");
    Tensor grad = Tensor::zeros(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = f(probe);
        probe[i] = orig - eps;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

}  // namespace svae
