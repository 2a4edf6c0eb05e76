#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace cyclebnn {

// Dense row-major shape. Dimensions are strictly positive and the element
// count must fit in 64 bits; both are validated at construction.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int64_t> dims);
    explicit Shape(std::vector<int64_t> dims);

    int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
    int64_t operator[](int64_t i) const { return dims_[static_cast<size_t>(i)]; }
    int64_t numel() const { return numel_; }
    const std::vector<int64_t>& dims() const { return dims_; }

    bool operator==(const Shape& other) const { return dims_ == other.dims_; }
    bool operator!=(const Shape& other) const { return !(*this == other); }

    std::string str() const;

private:
    std::vector<int64_t> dims_;
    int64_t numel_ = 0;
};

// Flat row-major float32 tensor. No view aliasing: reshape copies. Values are
// immutable once handed out of an operation; in-place mutation happens only
// through explicitly mutable access (optimizer updates, gradient buffers).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(values_.size()); }
    bool empty() const { return values_.empty(); }

    float* data() { return values_.data(); }
    const float* data() const { return values_.data(); }
    float& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

    const std::vector<float>& values() const { return values_; }

    Tensor reshaped(Shape new_shape) const;

private:
    Shape shape_;
    std::vector<float> values_;
};

// Reference 2D convolution (zero padding). Input is [c_in,h,w] or
// [b,c_in,h,w]; weight is [c_out,c_in,k_h,k_w]. This is the ground-truth
// float path every other conv implementation is checked against.
Tensor conv2d_ref(const Tensor& input, const Tensor& weight, int64_t stride, int64_t padding);

// [n,k] x [k,m] -> [n,m]; summation is fixed left-to-right over k.
Tensor matmul(const Tensor& a, const Tensor& b);

// mean and population standard deviation (divisor n)
std::pair<double, double> stats(const Tensor& t);

bool all_finite(const Tensor& t);

} // namespace cyclebnn
