#include "cyclebnn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

namespace {

int64_t checked_numel(const std::vector<int64_t>& dims) {
    __int128 n = 1;
    for (int64_t d : dims) {
        CBNN_CHECK(d >= 1, "incompatible-shapes");
        n *= d;
        CBNN_CHECK(n <= INT64_MAX, "incompatible-shapes");
    }
    return static_cast<int64_t>(n);
}

} // namespace

Shape::Shape(std::initializer_list<int64_t> dims) : dims_(dims) { numel_ = checked_numel(dims_); }

Shape::Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) { numel_ = checked_numel(dims_); }

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < dims_.size(); ++i) {
        if (i) os << 'x';
        os << dims_[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), values_(static_cast<size_t>(shape_.numel()), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    CBNN_CHECK(static_cast<int64_t>(values_.size()) == shape_.numel(), "incompatible-shapes");
}

Tensor Tensor::reshaped(Shape new_shape) const {
    CBNN_CHECK(new_shape.numel() == numel(), "incompatible-shapes");
    return Tensor(std::move(new_shape), values_);
}

bool all_finite(const Tensor& t) {
    for (float v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor conv2d_ref(const Tensor& input, const Tensor& weight, int64_t stride, int64_t padding) {
    CBNN_CHECK(stride >= 1 && padding >= 0, "incompatible-shapes");
    CBNN_CHECK(weight.shape().rank() == 4, "incompatible-shapes");
    const bool batched = input.shape().rank() == 4;
    CBNN_CHECK(batched || input.shape().rank() == 3, "incompatible-shapes");

    const int64_t b = batched ? input.shape()[0] : 1;
    const int64_t ci = input.shape()[batched ? 1 : 0];
    const int64_t h = input.shape()[batched ? 2 : 1];
    const int64_t w = input.shape()[batched ? 3 : 2];
    const int64_t co = weight.shape()[0];
    const int64_t kh = weight.shape()[2];
    const int64_t kw = weight.shape()[3];
    CBNN_CHECK(weight.shape()[1] == ci, "incompatible-shapes");
    CBNN_CHECK(kh <= h + 2 * padding && kw <= w + 2 * padding, "kernel-too-large");

    const int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const int64_t ow = (w + 2 * padding - kw) / stride + 1;

    Shape out_shape = batched ? Shape{b, co, oh, ow} : Shape{co, oh, ow};
    Tensor out(out_shape);

    const float* in = input.data();
    const float* wt = weight.data();
    float* dst = out.data();

    for (int64_t bi = 0; bi < b; ++bi) {
        const float* in_b = in + bi * ci * h * w;
        float* out_b = dst + bi * co * oh * ow;
        for (int64_t o = 0; o < co; ++o) {
            const float* w_o = wt + o * ci * kh * kw;
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < ci; ++i) {
                        const float* in_c = in_b + i * h * w;
                        const float* w_c = w_o + i * kh * kw;
                        for (int64_t u = 0; u < kh; ++u) {
                            const int64_t row = y * stride - padding + u;
                            if (row < 0 || row >= h) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                                const int64_t col = x * stride - padding + v;
                                if (col < 0 || col >= w) continue;
                                acc += static_cast<double>(in_c[row * w + col]) *
                                       static_cast<double>(w_c[u * kw + v]);
                            }
                        }
                    }
                    out_b[(o * oh + y) * ow + x] = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    CBNN_CHECK(a.shape().rank() == 2 && b.shape().rank() == 2, "incompatible-shapes");
    const int64_t n = a.shape()[0];
    const int64_t k = a.shape()[1];
    const int64_t m = b.shape()[1];
    CBNN_CHECK(b.shape()[0] == k, "incompatible-shapes");

    Tensor out(Shape{n, m});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = out.data();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t)
                acc += static_cast<double>(pa[i * k + t]) * static_cast<double>(pb[t * m + j]);
            pc[i * m + j] = static_cast<float>(acc);
        }
    }
    return out;
}

std::pair<double, double> stats(const Tensor& t) {
    CBNN_CHECK(!t.empty(), "empty-tensor");
    const int64_t n = t.numel();
    double sum = 0.0;
    for (float v : t.values()) sum += v;
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (float v : t.values()) {
        const double d = v - mean;
        sq += d * d;
    }
    return {mean, std::sqrt(sq / static_cast<double>(n))};
}

} // namespace cyclebnn
