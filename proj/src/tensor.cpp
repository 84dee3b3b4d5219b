#include "featmerge/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>

#include "featmerge/error.hpp"

namespace featmerge {

const char* to_string(DType dtype) noexcept {
    return dtype == DType::f32 ? "f32" : "f64";
}

DType dtype_from_string(const std::string& name) {
    if (name == "f32") return DType::f32;
    if (name == "f64") return DType::f64;
    fail(ErrorKind::Format, "unknown floating dtype '" + name + "'");
}

std::size_t shape_product(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, DType dtype)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0), dtype_(dtype) {}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype)
    : shape_(std::move(shape)), values_(std::move(values)), dtype_(dtype) {
    if (shape_product(shape_) != values_.size()) {
        fail(ErrorKind::Dimension, "tensor of shape " + shape_string(shape_) + " given " +
                                       std::to_string(values_.size()) + " values");
    }
    round_to_dtype();
}

void Tensor::round_to_dtype() noexcept {
    if (dtype_ == DType::f64) return;
    for (double& v : values_) v = quantize(v, dtype_);
}

Tensor Tensor::as_dtype(DType dtype) const {
    Tensor t = *this;
    t.dtype_ = dtype;
    t.round_to_dtype();
    return t;
}

bool Tensor::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool operator==(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape_ != b.shape_ || a.dtype_ != b.dtype_) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.values_[i]) != std::bit_cast<std::uint64_t>(b.values_[i])) return false;
    }
    return true;
}

}  // namespace featmerge
