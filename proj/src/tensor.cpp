#include "svae/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "svae/errors.hpp"

namespace svae {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
    out << ')';
    return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape_) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    if (shape_size(shape_) != values_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                             std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() == 2) return shape_[0];
    throw DimensionError("matrix view requested for rank-" + std::to_string(shape_.size()) + " tensor");
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw DimensionError("matrix view requested for rank-" + std::to_string(shape_.size()) + " tensor");
}

double Tensor::item() const {
    if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return values_[0];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
    const auto c = cols();
    return std::span<const double>(values_).subspan(r * c, c);
}

std::span<double> Tensor::row_span(std::size_t r) {
    const auto c = cols();
    return std::span<double>(values_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace svae
