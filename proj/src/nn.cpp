#include "cyclebnn/nn.hpp"

#include <algorithm>
#include <cmath>

#include "cyclebnn/error.hpp"
#include "cyclebnn/rng.hpp"

namespace cyclebnn {

Parameter::Parameter(std::string name, Tensor value)
    : name(std::move(name)), real(std::move(value)), grad(real.shape(), 0.0f) {}

void Parameter::zero_grad() {
    std::fill(grad.data(), grad.data() + grad.numel(), 0.0f);
}

double surrogate_grad(double a) {
    if (a >= -1.0 && a < 0.0) return 2.0 + 2.0 * a;
    if (a >= 0.0 && a < 1.0) return 2.0 - 2.0 * a;
    return 0.0;
}

std::pair<Tensor, Tensor> binarize_weights(const Parameter& p) {
    Tensor w_std = standardize(p.real);
    Tensor w_bin(w_std.shape());
    for (int64_t i = 0; i < w_std.numel(); ++i) w_bin[i] = w_std[i] < 0.0f ? -1.0f : 1.0f;
    return {std::move(w_std), std::move(w_bin)};
}

Tensor quantize_symmetric(const Tensor& t, int bits) {
    float gmax = 0.0f;
    for (int64_t i = 0; i < t.numel(); ++i) gmax = std::max(gmax, std::abs(t[i]));
    if (gmax == 0.0f) return Tensor(t.shape(), 0.0f);
    return quantize_tensor(t, QuantSpec(bits, -static_cast<double>(gmax), static_cast<double>(gmax)));
}

const char* to_string(LayerSpec::Kind kind) {
    switch (kind) {
    case LayerSpec::Kind::fp_conv: return "fp_conv";
    case LayerSpec::Kind::binary_conv: return "binary_conv";
    case LayerSpec::Kind::fp_linear: return "fp_linear";
    case LayerSpec::Kind::binary_linear: return "binary_linear";
    case LayerSpec::Kind::batchnorm: return "batchnorm";
    case LayerSpec::Kind::hardtanh: return "hardtanh";
    case LayerSpec::Kind::maxpool: return "maxpool";
    case LayerSpec::Kind::flatten: return "flatten";
    }
    return "?";
}

namespace {

Tensor sign_tensor(const Tensor& t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = t[i] < 0.0f ? -1.0f : 1.0f;
    return out;
}

// Layers work on batched 4D [b,c,h,w] (or 2D [b,f]) activations; a 3D input
// is treated as a single-sample batch and unwrapped on the way out.
Tensor wrap4d(const Tensor& t, bool& was_3d) {
    was_3d = t.shape().rank() == 3;
    if (!was_3d) return t;
    return t.reshaped(Shape{1, t.shape()[0], t.shape()[1], t.shape()[2]});
}

Tensor unwrap(Tensor t, bool was_3d) {
    if (!was_3d) return t;
    return t.reshaped(Shape{t.shape()[1], t.shape()[2], t.shape()[3]});
}

Shape conv_out_shape(const Shape& in, int64_t co, int64_t k, int64_t stride, int64_t padding) {
    CBNN_CHECK(in.rank() == 3, "incompatible-shapes");
    const int64_t h = in[1];
    const int64_t w = in[2];
    CBNN_CHECK(k <= h + 2 * padding && k <= w + 2 * padding, "kernel-too-large");
    return Shape{co, (h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1};
}

// Shared conv backward: gradients of sum(upstream * conv(input, weight))
// w.r.t. input and weight. Double accumulators, fixed traversal order.
struct ConvGrads {
    Tensor grad_input;
    Tensor grad_weight;
};

ConvGrads conv_backward(const Tensor& upstream, const Tensor& input, const Tensor& weight,
                        int64_t stride, int64_t padding) {
    const int64_t b = input.shape()[0];
    const int64_t ci = input.shape()[1];
    const int64_t h = input.shape()[2];
    const int64_t w = input.shape()[3];
    const int64_t co = weight.shape()[0];
    const int64_t kh = weight.shape()[2];
    const int64_t kw = weight.shape()[3];
    const int64_t oh = upstream.shape()[2];
    const int64_t ow = upstream.shape()[3];
    CBNN_CHECK(upstream.shape()[0] == b && upstream.shape()[1] == co, "incompatible-shapes");

    std::vector<double> gin(static_cast<size_t>(input.numel()), 0.0);
    std::vector<double> gw(static_cast<size_t>(weight.numel()), 0.0);
    const float* g = upstream.data();
    const float* in = input.data();
    const float* wt = weight.data();

    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t o = 0; o < co; ++o) {
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    const double gv = g[((bi * co + o) * oh + y) * ow + x];
                    if (gv == 0.0) continue;
                    for (int64_t i = 0; i < ci; ++i) {
                        for (int64_t u = 0; u < kh; ++u) {
                            const int64_t row = y * stride - padding + u;
                            if (row < 0 || row >= h) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                                const int64_t col = x * stride - padding + v;
                                if (col < 0 || col >= w) continue;
                                const size_t in_idx =
                                    static_cast<size_t>(((bi * ci + i) * h + row) * w + col);
                                const size_t w_idx =
                                    static_cast<size_t>(((o * ci + i) * kh + u) * kw + v);
                                gw[w_idx] += gv * in[in_idx];
                                gin[in_idx] += gv * wt[w_idx];
                            }
                        }
                    }
                }
            }
        }
    }

    ConvGrads out{Tensor(input.shape()), Tensor(weight.shape())};
    for (int64_t i = 0; i < input.numel(); ++i)
        out.grad_input[i] = static_cast<float>(gin[static_cast<size_t>(i)]);
    for (int64_t i = 0; i < weight.numel(); ++i)
        out.grad_weight[i] = static_cast<float>(gw[static_cast<size_t>(i)]);
    return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
    CBNN_CHECK(dst.shape() == src.shape(), "incompatible-shapes");
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

} // namespace

// ---------------------------------------------------------------- FpConv2d

FpConv2d::FpConv2d(std::string name, int64_t in_channels, int64_t out_channels, int64_t kernel,
                   int64_t stride, int64_t padding)
    : weight(name + ".weight", Tensor(Shape{out_channels, in_channels, kernel, kernel})),
      stride(stride), padding(padding) {}

Tensor FpConv2d::forward(const Tensor& input, const PrecisionContext&, bool training) {
    bool was_3d = false;
    Tensor in = wrap4d(input, was_3d);
    Tensor out = conv2d_ref(in, weight.real, stride, padding);
    if (training) {
        cached_input_ = std::move(in);
        has_cache_ = true;
    }
    return unwrap(std::move(out), was_3d);
}

Tensor FpConv2d::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    bool was_3d = false;
    Tensor g = wrap4d(upstream, was_3d);
    ConvGrads grads = conv_backward(g, cached_input_, weight.real, stride, padding);
    accumulate(weight.grad, grads.grad_weight);
    return unwrap(std::move(grads.grad_input), was_3d);
}

Shape FpConv2d::output_shape(const Shape& in) const {
    CBNN_CHECK(in[0] == weight.real.shape()[1], "incompatible-shapes");
    return conv_out_shape(in, weight.real.shape()[0], weight.real.shape()[2], stride, padding);
}

int64_t FpConv2d::mac_count(const Shape& in) const {
    const Shape out = output_shape(in);
    return out[0] * out[1] * out[2] * in[0] * weight.real.shape()[2] * weight.real.shape()[3];
}

// -------------------------------------------------------------- BinaryConv2d

BinaryConv2d::BinaryConv2d(std::string name, int64_t in_channels, int64_t out_channels,
                           int64_t kernel, int64_t stride, int64_t padding)
    : weight(name + ".weight", Tensor(Shape{out_channels, in_channels, kernel, kernel})),
      stride(stride), padding(padding) {}

Tensor BinaryConv2d::forward(const Tensor& input, const PrecisionContext& ctx, bool training) {
    bool was_3d = false;
    Tensor in = wrap4d(input, was_3d);
    auto [w_std, w_bin] = binarize_weights(weight);
    (void)w_std;
    Tensor a1 = sign_tensor(in);
    Tensor out = conv2d_ref(a1, w_bin, stride, padding);
    if (training) {
        cached_a1_ = std::move(a1);
        cached_wbin_ = std::move(w_bin);
        cached_aps_ = quantize_tensor(in, QuantSpec(ctx.backward_bits, -1.0, 1.0));
        has_cache_ = true;
    }
    return unwrap(std::move(out), was_3d);
}

Tensor BinaryConv2d::backward(const Tensor& upstream, const PrecisionContext& ctx) {
    CBNN_CHECK(has_cache_, "stale-cache");
    bool was_3d = false;
    Tensor g = wrap4d(upstream, was_3d);
    Tensor g8 = ctx.grad_bits > 0 ? quantize_symmetric(g, ctx.grad_bits) : g;
    ConvGrads grads = conv_backward(g8, cached_a1_, cached_wbin_, stride, padding);
    accumulate(weight.grad, grads.grad_weight);
    for (int64_t i = 0; i < grads.grad_input.numel(); ++i)
        grads.grad_input[i] = static_cast<float>(
            static_cast<double>(grads.grad_input[i]) * surrogate_grad(cached_aps_[i]));
    return unwrap(std::move(grads.grad_input), was_3d);
}

Shape BinaryConv2d::output_shape(const Shape& in) const {
    CBNN_CHECK(in[0] == weight.real.shape()[1], "incompatible-shapes");
    return conv_out_shape(in, weight.real.shape()[0], weight.real.shape()[2], stride, padding);
}

int64_t BinaryConv2d::mac_count(const Shape& in) const {
    const Shape out = output_shape(in);
    return out[0] * out[1] * out[2] * in[0] * weight.real.shape()[2] * weight.real.shape()[3];
}

const Tensor& BinaryConv2d::cached_a1() const {
    CBNN_CHECK(has_cache_, "stale-cache");
    return cached_a1_;
}

const Tensor& BinaryConv2d::cached_wbin() const {
    CBNN_CHECK(has_cache_, "stale-cache");
    return cached_wbin_;
}

const Tensor& BinaryConv2d::cached_aps() const {
    CBNN_CHECK(has_cache_, "stale-cache");
    return cached_aps_;
}

// ---------------------------------------------------------------- FpLinear

FpLinear::FpLinear(std::string name, int64_t in_features, int64_t out_features)
    : weight(name + ".weight", Tensor(Shape{out_features, in_features})),
      bias(name + ".bias", Tensor(Shape{out_features})) {}

Tensor FpLinear::forward(const Tensor& input, const PrecisionContext&, bool training) {
    CBNN_CHECK(input.shape().rank() == 2, "incompatible-shapes");
    const int64_t b = input.shape()[0];
    const int64_t in_f = weight.real.shape()[1];
    const int64_t out_f = weight.real.shape()[0];
    CBNN_CHECK(input.shape()[1] == in_f, "incompatible-shapes");

    Tensor out(Shape{b, out_f});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t o = 0; o < out_f; ++o) {
            double acc = bias.real[o];
            for (int64_t i = 0; i < in_f; ++i)
                acc += static_cast<double>(input[bi * in_f + i]) *
                       static_cast<double>(weight.real[o * in_f + i]);
            out[bi * out_f + o] = static_cast<float>(acc);
        }
    }
    if (training) {
        cached_input_ = input;
        has_cache_ = true;
    }
    return out;
}

Tensor FpLinear::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    const int64_t b = cached_input_.shape()[0];
    const int64_t in_f = weight.real.shape()[1];
    const int64_t out_f = weight.real.shape()[0];
    CBNN_CHECK(upstream.shape() == Shape({b, out_f}), "incompatible-shapes");

    Tensor gin(cached_input_.shape());
    for (int64_t o = 0; o < out_f; ++o) {
        double gb = 0.0;
        for (int64_t bi = 0; bi < b; ++bi) gb += upstream[bi * out_f + o];
        bias.grad[o] += static_cast<float>(gb);
        for (int64_t i = 0; i < in_f; ++i) {
            double gw = 0.0;
            for (int64_t bi = 0; bi < b; ++bi)
                gw += static_cast<double>(upstream[bi * out_f + o]) *
                      static_cast<double>(cached_input_[bi * in_f + i]);
            weight.grad[o * in_f + i] += static_cast<float>(gw);
        }
    }
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < in_f; ++i) {
            double acc = 0.0;
            for (int64_t o = 0; o < out_f; ++o)
                acc += static_cast<double>(upstream[bi * out_f + o]) *
                       static_cast<double>(weight.real[o * in_f + i]);
            gin[bi * in_f + i] = static_cast<float>(acc);
        }
    }
    return gin;
}

Shape FpLinear::output_shape(const Shape& in) const {
    CBNN_CHECK(in.rank() == 1 && in[0] == weight.real.shape()[1], "incompatible-shapes");
    return Shape{weight.real.shape()[0]};
}

int64_t FpLinear::mac_count(const Shape&) const {
    return weight.real.shape()[0] * weight.real.shape()[1];
}

// -------------------------------------------------------------- BinaryLinear

BinaryLinear::BinaryLinear(std::string name, int64_t in_features, int64_t out_features)
    : weight(name + ".weight", Tensor(Shape{out_features, in_features})) {}

Tensor BinaryLinear::forward(const Tensor& input, const PrecisionContext& ctx, bool training) {
    CBNN_CHECK(input.shape().rank() == 2, "incompatible-shapes");
    const int64_t b = input.shape()[0];
    const int64_t in_f = weight.real.shape()[1];
    const int64_t out_f = weight.real.shape()[0];
    CBNN_CHECK(input.shape()[1] == in_f, "incompatible-shapes");

    auto [w_std, w_bin] = binarize_weights(weight);
    (void)w_std;
    Tensor a1 = sign_tensor(input);

    Tensor out(Shape{b, out_f});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t o = 0; o < out_f; ++o) {
            double acc = 0.0;
            for (int64_t i = 0; i < in_f; ++i)
                acc += static_cast<double>(a1[bi * in_f + i]) *
                       static_cast<double>(w_bin[o * in_f + i]);
            out[bi * out_f + o] = static_cast<float>(acc);
        }
    }
    if (training) {
        cached_a1_ = std::move(a1);
        cached_wbin_ = std::move(w_bin);
        cached_aps_ = quantize_tensor(input, QuantSpec(ctx.backward_bits, -1.0, 1.0));
        has_cache_ = true;
    }
    return out;
}

Tensor BinaryLinear::backward(const Tensor& upstream, const PrecisionContext& ctx) {
    CBNN_CHECK(has_cache_, "stale-cache");
    const int64_t b = cached_a1_.shape()[0];
    const int64_t in_f = weight.real.shape()[1];
    const int64_t out_f = weight.real.shape()[0];
    CBNN_CHECK(upstream.shape() == Shape({b, out_f}), "incompatible-shapes");

    Tensor g8 = ctx.grad_bits > 0 ? quantize_symmetric(upstream, ctx.grad_bits) : upstream;

    for (int64_t o = 0; o < out_f; ++o) {
        for (int64_t i = 0; i < in_f; ++i) {
            double gw = 0.0;
            for (int64_t bi = 0; bi < b; ++bi)
                gw += static_cast<double>(g8[bi * out_f + o]) *
                      static_cast<double>(cached_a1_[bi * in_f + i]);
            weight.grad[o * in_f + i] += static_cast<float>(gw);
        }
    }
    Tensor gin(cached_a1_.shape());
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < in_f; ++i) {
            double acc = 0.0;
            for (int64_t o = 0; o < out_f; ++o)
                acc += static_cast<double>(g8[bi * out_f + o]) *
                       static_cast<double>(cached_wbin_[o * in_f + i]);
            gin[bi * in_f + i] =
                static_cast<float>(acc * surrogate_grad(cached_aps_[bi * in_f + i]));
        }
    }
    return gin;
}

Shape BinaryLinear::output_shape(const Shape& in) const {
    CBNN_CHECK(in.rank() == 1 && in[0] == weight.real.shape()[1], "incompatible-shapes");
    return Shape{weight.real.shape()[0]};
}

int64_t BinaryLinear::mac_count(const Shape&) const {
    return weight.real.shape()[0] * weight.real.shape()[1];
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::string name, int64_t channels, double eps, double momentum)
    : gamma(name + ".gamma", Tensor(Shape{channels}, 1.0f)),
      beta(name + ".beta", Tensor(Shape{channels}, 0.0f)),
      running_mean(Shape{channels}, 0.0f), running_var(Shape{channels}, 1.0f), eps(eps),
      momentum(momentum), name_(std::move(name)) {}

std::vector<std::pair<std::string, Tensor*>> BatchNorm::buffers() {
    return {{name_ + ".running_mean", &running_mean}, {name_ + ".running_var", &running_var}};
}

Tensor BatchNorm::forward(const Tensor& input, const PrecisionContext&, bool training) {
    const int64_t rank = input.shape().rank();
    CBNN_CHECK(rank == 2 || rank == 4, "incompatible-shapes");
    const int64_t c = rank == 4 ? input.shape()[1] : input.shape()[1];
    CBNN_CHECK(c == gamma.real.numel(), "incompatible-shapes");
    const int64_t b = input.shape()[0];
    const int64_t spatial = rank == 4 ? input.shape()[2] * input.shape()[3] : 1;
    const int64_t n = b * spatial;

    Tensor out(input.shape());
    if (training) {
        CBNN_CHECK(n > 1 || eps > 0.0, "degenerate-batch");
        cached_xhat_ = Tensor(input.shape());
        cached_inv_std_.assign(static_cast<size_t>(c), 0.0);
        cached_shape_ = input.shape();
        for (int64_t ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (int64_t bi = 0; bi < b; ++bi) {
                const float* src = input.data() + (bi * c + ch) * spatial;
                for (int64_t s = 0; s < spatial; ++s) sum += src[s];
            }
            const double mean = sum / static_cast<double>(n);
            double sq = 0.0;
            for (int64_t bi = 0; bi < b; ++bi) {
                const float* src = input.data() + (bi * c + ch) * spatial;
                for (int64_t s = 0; s < spatial; ++s) {
                    const double d = src[s] - mean;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(n);
            const double inv_std = 1.0 / std::sqrt(var + eps);
            cached_inv_std_[static_cast<size_t>(ch)] = inv_std;

            running_mean[ch] = static_cast<float>((1.0 - momentum) * running_mean[ch] +
                                                  momentum * mean);
            running_var[ch] =
                static_cast<float>((1.0 - momentum) * running_var[ch] + momentum * var);

            const double g = gamma.real[ch];
            const double bt = beta.real[ch];
            for (int64_t bi = 0; bi < b; ++bi) {
                const float* src = input.data() + (bi * c + ch) * spatial;
                float* xh = cached_xhat_.data() + (bi * c + ch) * spatial;
                float* dst = out.data() + (bi * c + ch) * spatial;
                for (int64_t s = 0; s < spatial; ++s) {
                    const double xhat = (src[s] - mean) * inv_std;
                    xh[s] = static_cast<float>(xhat);
                    dst[s] = static_cast<float>(g * xhat + bt);
                }
            }
        }
        has_cache_ = true;
    } else {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
            const double mean = running_mean[ch];
            const double g = gamma.real[ch];
            const double bt = beta.real[ch];
            for (int64_t bi = 0; bi < b; ++bi) {
                const float* src = input.data() + (bi * c + ch) * spatial;
                float* dst = out.data() + (bi * c + ch) * spatial;
                for (int64_t s = 0; s < spatial; ++s)
                    dst[s] = static_cast<float>(g * (src[s] - mean) * inv_std + bt);
            }
        }
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    CBNN_CHECK(upstream.shape() == cached_shape_, "incompatible-shapes");
    const int64_t rank = cached_shape_.rank();
    const int64_t b = cached_shape_[0];
    const int64_t c = gamma.real.numel();
    const int64_t spatial = rank == 4 ? cached_shape_[2] * cached_shape_[3] : 1;
    const int64_t n = b * spatial;

    Tensor gin(cached_shape_);
    for (int64_t ch = 0; ch < c; ++ch) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (int64_t bi = 0; bi < b; ++bi) {
            const float* g = upstream.data() + (bi * c + ch) * spatial;
            const float* xh = cached_xhat_.data() + (bi * c + ch) * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
                sum_g += g[s];
                sum_gx += static_cast<double>(g[s]) * xh[s];
            }
        }
        gamma.grad[ch] += static_cast<float>(sum_gx);
        beta.grad[ch] += static_cast<float>(sum_g);

        const double mean_g = sum_g / static_cast<double>(n);
        const double mean_gx = sum_gx / static_cast<double>(n);
        const double scale = gamma.real[ch] * cached_inv_std_[static_cast<size_t>(ch)];
        for (int64_t bi = 0; bi < b; ++bi) {
            const float* g = upstream.data() + (bi * c + ch) * spatial;
            const float* xh = cached_xhat_.data() + (bi * c + ch) * spatial;
            float* dst = gin.data() + (bi * c + ch) * spatial;
            for (int64_t s = 0; s < spatial; ++s)
                dst[s] = static_cast<float>(scale * (g[s] - mean_g - xh[s] * mean_gx));
        }
    }
    return gin;
}

// ----------------------------------------------------------------- Hardtanh

Tensor Hardtanh::forward(const Tensor& input, const PrecisionContext&, bool training) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.numel(); ++i) out[i] = std::clamp(input[i], -1.0f, 1.0f);
    if (training) {
        cached_input_ = input;
        has_cache_ = true;
    }
    return out;
}

Tensor Hardtanh::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    CBNN_CHECK(upstream.shape() == cached_input_.shape(), "incompatible-shapes");
    Tensor gin(upstream.shape());
    for (int64_t i = 0; i < upstream.numel(); ++i) {
        const float x = cached_input_[i];
        gin[i] = (x > -1.0f && x < 1.0f) ? upstream[i] : 0.0f;
    }
    return gin;
}

// ----------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& input, const PrecisionContext&, bool training) {
    CBNN_CHECK(input.shape().rank() == 4, "incompatible-shapes");
    const int64_t b = input.shape()[0];
    const int64_t c = input.shape()[1];
    const int64_t h = input.shape()[2];
    const int64_t w = input.shape()[3];
    CBNN_CHECK(h >= window && w >= window, "kernel-too-large");
    const int64_t oh = h / window;
    const int64_t ow = w / window;

    Tensor out(Shape{b, c, oh, ow});
    std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = input.data() + (bi * c + ch) * h * w;
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    float best = src[(y * window) * w + x * window];
                    int64_t best_idx = (y * window) * w + x * window;
                    for (int64_t u = 0; u < window; ++u) {
                        for (int64_t v = 0; v < window; ++v) {
                            const int64_t idx = (y * window + u) * w + (x * window + v);
                            if (src[idx] > best) { // first max wins on ties
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const int64_t out_idx = ((bi * c + ch) * oh + y) * ow + x;
                    out[out_idx] = best;
                    argmax[static_cast<size_t>(out_idx)] = (bi * c + ch) * h * w + best_idx;
                }
            }
        }
    }
    if (training) {
        cached_argmax_ = std::move(argmax);
        cached_in_shape_ = input.shape();
        has_cache_ = true;
    }
    return out;
}

Tensor MaxPool2d::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    CBNN_CHECK(static_cast<size_t>(upstream.numel()) == cached_argmax_.size(),
               "incompatible-shapes");
    Tensor gin(cached_in_shape_, 0.0f);
    for (int64_t i = 0; i < upstream.numel(); ++i)
        gin[cached_argmax_[static_cast<size_t>(i)]] += upstream[i];
    return gin;
}

Shape MaxPool2d::output_shape(const Shape& in) const {
    CBNN_CHECK(in.rank() == 3, "incompatible-shapes");
    CBNN_CHECK(in[1] >= window && in[2] >= window, "kernel-too-large");
    return Shape{in[0], in[1] / window, in[2] / window};
}

// ------------------------------------------------------------------ Flatten

Tensor Flatten::forward(const Tensor& input, const PrecisionContext&, bool training) {
    CBNN_CHECK(input.shape().rank() == 4, "incompatible-shapes");
    const int64_t b = input.shape()[0];
    if (training) {
        cached_in_shape_ = input.shape();
        has_cache_ = true;
    }
    return input.reshaped(Shape{b, input.numel() / b});
}

Tensor Flatten::backward(const Tensor& upstream, const PrecisionContext&) {
    CBNN_CHECK(has_cache_, "stale-cache");
    return upstream.reshaped(cached_in_shape_);
}

Shape Flatten::output_shape(const Shape& in) const {
    CBNN_CHECK(in.rank() == 3, "incompatible-shapes");
    return Shape{in.numel()};
}

// ------------------------------------------------------------------ Network

Tensor Network::forward(const Tensor& input, const PrecisionContext& ctx, bool training) {
    Tensor cur = input;
    for (auto& layer : layers) cur = layer->forward(cur, ctx, training);
    return cur;
}

void Network::backward(const Tensor& loss_grad, const PrecisionContext& ctx) {
    Tensor cur = loss_grad;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = (*it)->backward(cur, ctx);
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers)
        for (Parameter* p : layer->parameters()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& layer : layers)
        for (auto& b : layer->buffers()) out.push_back(b);
    return out;
}

void Network::zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
}

XentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    CBNN_CHECK(logits.shape().rank() == 2, "incompatible-shapes");
    const int64_t b = logits.shape()[0];
    const int64_t k = logits.shape()[1];
    CBNN_CHECK(static_cast<int64_t>(labels.size()) == b, "incompatible-shapes");
    for (int label : labels) CBNN_CHECK(label >= 0 && label < k, "bad-label");

    Tensor grad(logits.shape());
    double loss = 0.0;
    for (int64_t bi = 0; bi < b; ++bi) {
        const float* row = logits.data() + bi * k;
        double mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        loss += lse - row[labels[static_cast<size_t>(bi)]];
        for (int64_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - lse);
            const double onehot = (j == labels[static_cast<size_t>(bi)]) ? 1.0 : 0.0;
            grad[bi * k + j] = static_cast<float>((p - onehot) / static_cast<double>(b));
        }
    }
    return {loss / static_cast<double>(b), std::move(grad)};
}

std::vector<LayerSpec> convnet_small_spec(bool binarize_first_last) {
    using K = LayerSpec::Kind;
    std::vector<LayerSpec> specs;
    auto conv = [](K kind, int64_t ch) {
        LayerSpec s;
        s.kind = kind;
        s.out_channels = ch;
        s.kernel = 3;
        s.stride = 1;
        s.padding = 1;
        return s;
    };
    auto plain = [](K kind) {
        LayerSpec s;
        s.kind = kind;
        return s;
    };
    specs.push_back(conv(binarize_first_last ? K::binary_conv : K::fp_conv, 16));
    specs.push_back(plain(K::batchnorm));
    specs.push_back(plain(K::hardtanh));
    specs.push_back(conv(K::binary_conv, 32));
    specs.push_back(plain(K::batchnorm));
    specs.push_back(plain(K::hardtanh));
    specs.push_back(plain(K::maxpool));
    specs.push_back(conv(K::binary_conv, 64));
    specs.push_back(plain(K::batchnorm));
    specs.push_back(plain(K::hardtanh));
    specs.push_back(plain(K::maxpool));
    specs.push_back(plain(K::flatten));
    LayerSpec head;
    head.kind = binarize_first_last ? K::binary_linear : K::fp_linear;
    specs.push_back(head);
    return specs;
}

namespace {

void init_uniform(Tensor& t, int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(-bound, bound));
}

} // namespace

Network build_network(const std::vector<LayerSpec>& specs, const Shape& input_chw,
                      int64_t class_count, uint64_t seed) {
    CBNN_CHECK(input_chw.rank() == 3, "incompatible-shapes");
    CBNN_CHECK(class_count >= 2, "incompatible-shapes");
    Rng rng(seed);
    Network net;
    Shape cur = input_chw;
    int idx = 0;
    for (const LayerSpec& spec : specs) {
        const std::string name = "l" + std::to_string(idx++);
        using K = LayerSpec::Kind;
        std::unique_ptr<Layer> layer;
        switch (spec.kind) {
        case K::fp_conv: {
            auto l = std::make_unique<FpConv2d>(name, cur[0], spec.out_channels, spec.kernel,
                                                spec.stride, spec.padding);
            init_uniform(l->weight.real, cur[0] * spec.kernel * spec.kernel, rng);
            layer = std::move(l);
            break;
        }
        case K::binary_conv: {
            auto l = std::make_unique<BinaryConv2d>(name, cur[0], spec.out_channels, spec.kernel,
                                                    spec.stride, spec.padding);
            init_uniform(l->weight.real, cur[0] * spec.kernel * spec.kernel, rng);
            layer = std::move(l);
            break;
        }
        case K::fp_linear: {
            const int64_t out = spec.out_channels > 0 ? spec.out_channels : class_count;
            auto l = std::make_unique<FpLinear>(name, cur[0], out);
            init_uniform(l->weight.real, cur[0], rng);
            layer = std::move(l);
            break;
        }
        case K::binary_linear: {
            const int64_t out = spec.out_channels > 0 ? spec.out_channels : class_count;
            auto l = std::make_unique<BinaryLinear>(name, cur[0], out);
            init_uniform(l->weight.real, cur[0], rng);
            layer = std::move(l);
            break;
        }
        case K::batchnorm:
            layer = std::make_unique<BatchNorm>(name, cur[0], spec.bn_eps, spec.bn_momentum);
            break;
        case K::hardtanh:
            layer = std::make_unique<Hardtanh>();
            break;
        case K::maxpool:
            layer = std::make_unique<MaxPool2d>(spec.pool);
            break;
        case K::flatten:
            layer = std::make_unique<Flatten>();
            break;
        }
        cur = layer->output_shape(cur);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

} // namespace cyclebnn
