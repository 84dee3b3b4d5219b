#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace featmerge {

using Shape = std::vector<std::size_t>;

/// Storage precision of a tensor. Values are held as doubles in memory; an
/// f32 tensor keeps every value exactly representable as a float.
enum class DType { f32, f64 };

const char* to_string(DType dtype) noexcept;
DType dtype_from_string(const std::string& name);

inline double quantize(double v, DType dtype) noexcept {
    return dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

std::size_t shape_product(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, DType dtype = DType::f32);
    Tensor(Shape shape, std::vector<double> values, DType dtype = DType::f32);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }
    DType dtype() const noexcept { return dtype_; }

    std::span<const double> values() const noexcept { return values_; }
    // Callers writing through this view must call round_to_dtype() afterwards
    // when the tensor is f32.
    std::span<double> values() noexcept { return values_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    void round_to_dtype() noexcept;
    Tensor as_dtype(DType dtype) const;
    bool all_finite() const noexcept;

    // Bitwise equality of shape, dtype and every value.
    friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

private:
    Shape shape_;
    std::vector<double> values_;
    DType dtype_ = DType::f32;
};

}  // namespace featmerge
