#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cyclebnn/quant.hpp"
#include "cyclebnn/rng.hpp"
#include "cyclebnn/tensor.hpp"

namespace testutil {

// Central finite differences of a scalar function w.r.t. every element of x.
inline cyclebnn::Tensor finite_difference(const std::function<double(const cyclebnn::Tensor&)>& f,
                                          const cyclebnn::Tensor& x, double h = 1e-3) {
    cyclebnn::Tensor grad(x.shape());
    cyclebnn::Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float orig = probe[i];
        probe[i] = static_cast<float>(orig + h);
        const double up = f(probe);
        probe[i] = static_cast<float>(orig - h);
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = static_cast<float>((up - down) / (2.0 * h));
    }
    return grad;
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-6) {
    const double diff = std::abs(a - b);
    return diff <= abs_floor || diff <= rel * std::max(std::abs(a), std::abs(b));
}

// Gather-formulated conv gradients, written independently of the library's
// scatter-formulated backward: every output coordinate is summed in place.
struct BruteConvGrads {
    cyclebnn::Tensor grad_input;
    cyclebnn::Tensor grad_weight;
};

inline BruteConvGrads brute_conv_backward(const cyclebnn::Tensor& upstream,
                                          const cyclebnn::Tensor& input,
                                          const cyclebnn::Tensor& weight, int64_t stride,
                                          int64_t padding) {
    const int64_t b = input.shape()[0];
    const int64_t ci = input.shape()[1];
    const int64_t h = input.shape()[2];
    const int64_t w = input.shape()[3];
    const int64_t co = weight.shape()[0];
    const int64_t kh = weight.shape()[2];
    const int64_t kw = weight.shape()[3];
    const int64_t oh = upstream.shape()[2];
    const int64_t ow = upstream.shape()[3];

    BruteConvGrads out{cyclebnn::Tensor(input.shape()), cyclebnn::Tensor(weight.shape())};

    for (int64_t o = 0; o < co; ++o)
        for (int64_t i = 0; i < ci; ++i)
            for (int64_t u = 0; u < kh; ++u)
                for (int64_t v = 0; v < kw; ++v) {
                    double acc = 0.0;
                    for (int64_t bi = 0; bi < b; ++bi)
                        for (int64_t y = 0; y < oh; ++y)
                            for (int64_t x = 0; x < ow; ++x) {
                                const int64_t row = y * stride - padding + u;
                                const int64_t col = x * stride - padding + v;
                                if (row < 0 || row >= h || col < 0 || col >= w) continue;
                                acc += static_cast<double>(
                                           upstream[((bi * co + o) * oh + y) * ow + x]) *
                                       input[((bi * ci + i) * h + row) * w + col];
                            }
                    out.grad_weight[((o * ci + i) * kh + u) * kw + v] = static_cast<float>(acc);
                }

    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < ci; ++i)
            for (int64_t row = 0; row < h; ++row)
                for (int64_t col = 0; col < w; ++col) {
                    double acc = 0.0;
                    for (int64_t o = 0; o < co; ++o)
                        for (int64_t u = 0; u < kh; ++u)
                            for (int64_t v = 0; v < kw; ++v) {
                                const int64_t num_y = row + padding - u;
                                const int64_t num_x = col + padding - v;
                                if (num_y < 0 || num_x < 0) continue;
                                if (num_y % stride != 0 || num_x % stride != 0) continue;
                                const int64_t y = num_y / stride;
                                const int64_t x = num_x / stride;
                                if (y >= oh || x >= ow) continue;
                                acc += static_cast<double>(
                                           upstream[((bi * co + o) * oh + y) * ow + x]) *
                                       weight[((o * ci + i) * kh + u) * kw + v];
                            }
                    out.grad_input[((bi * ci + i) * h + row) * w + col] = static_cast<float>(acc);
                }
    return out;
}

// Exact integral of the piecewise-constant quantization-error integrand:
// sums f(q_k)*(q_k - alpha*sign(q_k))^2 over every lattice cell intersecting
// [lo,hi]. Independent of the midpoint-rule implementation it checks.
inline double qe_exact_lattice(const cyclebnn::GaussianFit& fit, int bits,
                               const cyclebnn::QEConfig& cfg) {
    const double levels = static_cast<double>((int64_t{1} << bits) - 1);
    const double step = (cfg.quant_hi - cfg.quant_lo) / levels;
    // cell k covers [q_lo + (k-1/2)*step, q_lo + (k+1/2)*step); find the k
    // range overlapping [lo,hi]
    const int64_t k_min =
        static_cast<int64_t>(std::floor((cfg.lo - cfg.quant_lo) / step + 0.5)) - 1;
    const int64_t k_max = static_cast<int64_t>(std::ceil((cfg.hi - cfg.quant_lo) / step + 0.5)) + 1;
    double total = 0.0;
    for (int64_t k = k_min; k <= k_max; ++k) {
        const double q = cfg.quant_lo + static_cast<double>(k) * step;
        double a = cfg.quant_lo + (static_cast<double>(k) - 0.5) * step;
        double b = cfg.quant_lo + (static_cast<double>(k) + 0.5) * step;
        a = std::max(a, cfg.lo);
        b = std::min(b, cfg.hi);
        if (b <= a) continue;
        const double d = q - fit.mean;
        const double f = fit.amplitude * std::exp(-d * d / (2.0 * fit.sigma * fit.sigma));
        const double r = q - cfg.alpha * (q < 0.0 ? -1.0 : 1.0);
        total += f * r * r * (b - a);
    }
    return total;
}

// Gaussian fits of the 16 binarized conv-layer weight distributions of a
// trained ResNet-18 (fixture columns a..p)
inline std::vector<cyclebnn::GaussianFit> resnet18_layer_fits() {
    return {
        {0.50, -0.11, 0.38}, {0.57, 0.14, 0.35}, {0.66, 0.05, 0.30},  {0.67, -0.05, 0.28},
        {0.61, -0.15, 0.29}, {0.57, -0.04, 0.37}, {0.64, 0.11, 0.34}, {0.58, -0.20, 0.38},
        {0.49, -0.19, 0.47}, {0.42, -0.08, 0.61}, {0.40, 0.17, 0.67}, {0.41, 0.15, 0.65},
        {0.42, 0.13, 0.60},  {0.35, 0.09, 0.70},  {0.40, 0.14, 0.57}, {0.39, -0.02, 0.59},
    };
}

// golden quantization-error values for those fits, rows = bits 2..12,
// columns = fits a..p
inline const std::vector<std::vector<double>>& golden_qe_table() {
    static const std::vector<std::vector<double>> table = {
        {0.192, 0.205, 0.214, 0.205, 0.189, 0.218, 0.227, 0.216, 0.210, 0.216, 0.194, 0.197,
         0.210, 0.216, 0.194, 0.197},
        {0.240, 0.259, 0.287, 0.280, 0.247, 0.276, 0.291, 0.264, 0.249, 0.248, 0.224, 0.228,
         0.249, 0.248, 0.224, 0.228},
        {0.248, 0.267, 0.298, 0.292, 0.256, 0.285, 0.301, 0.272, 0.256, 0.253, 0.230, 0.233,
         0.256, 0.253, 0.229, 0.233},
        {0.249, 0.269, 0.301, 0.294, 0.258, 0.287, 0.303, 0.273, 0.257, 0.254, 0.231, 0.234,
         0.257, 0.254, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.258, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.235},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
        {0.250, 0.270, 0.301, 0.295, 0.259, 0.288, 0.304, 0.274, 0.258, 0.255, 0.231, 0.234,
         0.258, 0.255, 0.231, 0.234},
    };
    return table;
}

inline cyclebnn::Tensor random_tensor(cyclebnn::Shape shape, cyclebnn::Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
    cyclebnn::Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

inline cyclebnn::Tensor random_signs(cyclebnn::Shape shape, cyclebnn::Rng& rng) {
    cyclebnn::Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next() & 1 ? 1.0f : -1.0f;
    return t;
}

} // namespace testutil
