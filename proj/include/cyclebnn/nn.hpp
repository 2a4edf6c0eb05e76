#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cyclebnn/quant.hpp"
#include "cyclebnn/tensor.hpp"

namespace cyclebnn {

// Latent full-precision weights plus their gradient accumulator. Binary layers
// binarize `real` on every forward; the optimizer only ever sees `real`.
struct Parameter {
    std::string name;
    Tensor real;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor value);

    void zero_grad();
};

// Per-step precision knobs for the quantized backward pass. backward_bits is
// PS(e) from the cyclic schedule and sets the activation quantization used by
// the surrogate derivative; grad_bits fixes the upstream loss-gradient
// precision (8 per the training recipe; 0 disables upstream quantization,
// used only by baseline comparisons).
struct PrecisionContext {
    int backward_bits = 8;
    int grad_bits = 8;
};

// piecewise polynomial standing in for d Sign / d a:
// 2+2a on [-1,0), 2-2a on [0,1), 0 otherwise
double surrogate_grad(double a);

// standardize then binarize: returns {w / sigma(w), sign(w / sigma(w))}
std::pair<Tensor, Tensor> binarize_weights(const Parameter& p);

// Per-tensor symmetric fake quantization over [-gmax, +gmax] with
// gmax = max|t|; an all-zero tensor stays zero.
Tensor quantize_symmetric(const Tensor& t, int bits);

struct LayerSpec {
    enum class Kind {
        fp_conv,
        binary_conv,
        fp_linear,
        binary_linear,
        batchnorm,
        hardtanh,
        maxpool,
        flatten
    };

    Kind kind;
    int64_t out_channels = 0; // conv / linear
    int64_t kernel = 0;       // conv: square k x k
    int64_t stride = 1;
    int64_t padding = 0;
    int64_t pool = 2; // maxpool window == stride
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

const char* to_string(LayerSpec::Kind kind);

class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerSpec::Kind kind() const = 0;
    virtual Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) = 0;
    virtual Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) = 0;
    virtual std::vector<Parameter*> parameters() { return {}; }
    // named non-parameter state (BN running stats), checkpointed alongside parameters
    virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }
    // per-sample shape algebra: [c,h,w] or [features] in, same out
    virtual Shape output_shape(const Shape& in) const = 0;
    // raw multiply-accumulate count for one sample with the given input shape
    virtual int64_t mac_count(const Shape&) const { return 0; }
};

class FpConv2d : public Layer {
public:
    FpConv2d(std::string name, int64_t in_channels, int64_t out_channels, int64_t kernel,
             int64_t stride, int64_t padding);

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::fp_conv; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    std::vector<Parameter*> parameters() override { return {&weight}; }
    Shape output_shape(const Shape& in) const override;
    int64_t mac_count(const Shape& in) const override;

    Parameter weight; // [c_out, c_in, k, k]
    int64_t stride;
    int64_t padding;

private:
    Tensor cached_input_;
    bool has_cache_ = false;
};

// Binary convolution: forward runs sign(a) * sign(standardize(w)) through the
// float reference conv (exact emulation of the XNOR/popcount kernel);
// backward applies the STE weight pass-through on the 8-bit upstream and the
// surrogate derivative evaluated at the PS(e)-bit quantized activations.
class BinaryConv2d : public Layer {
public:
    BinaryConv2d(std::string name, int64_t in_channels, int64_t out_channels, int64_t kernel,
                 int64_t stride, int64_t padding);

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::binary_conv; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    std::vector<Parameter*> parameters() override { return {&weight}; }
    Shape output_shape(const Shape& in) const override;
    int64_t mac_count(const Shape& in) const override;

    // {w_std, w_bin}; used by the packed-inference and pack paths
    std::pair<Tensor, Tensor> binarized() const { return binarize_weights(weight); }

    Parameter weight;
    int64_t stride;
    int64_t padding;

    const Tensor& cached_a1() const;
    const Tensor& cached_wbin() const;
    const Tensor& cached_aps() const;

private:
    Tensor cached_a1_, cached_wbin_, cached_aps_;
    bool has_cache_ = false;
};

class FpLinear : public Layer {
public:
    FpLinear(std::string name, int64_t in_features, int64_t out_features);

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::fp_linear; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    std::vector<Parameter*> parameters() override { return {&weight, &bias}; }
    Shape output_shape(const Shape& in) const override;
    int64_t mac_count(const Shape& in) const override;

    Parameter weight; // [out, in]
    Parameter bias;   // [out]

private:
    Tensor cached_input_;
    bool has_cache_ = false;
};

class BinaryLinear : public Layer {
public:
    BinaryLinear(std::string name, int64_t in_features, int64_t out_features);

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::binary_linear; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    std::vector<Parameter*> parameters() override { return {&weight}; }
    Shape output_shape(const Shape& in) const override;
    int64_t mac_count(const Shape& in) const override;

    std::pair<Tensor, Tensor> binarized() const { return binarize_weights(weight); }

    Parameter weight; // [out, in]

private:
    Tensor cached_a1_, cached_wbin_, cached_aps_;
    bool has_cache_ = false;
};

class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, int64_t channels, double eps = 1e-5, double momentum = 0.1);

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::batchnorm; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    std::vector<Parameter*> parameters() override { return {&gamma, &beta}; }
    std::vector<std::pair<std::string, Tensor*>> buffers() override;
    Shape output_shape(const Shape& in) const override { return in; }

    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;
    double eps;
    double momentum;

private:
    std::string name_;
    Tensor cached_xhat_;
    std::vector<double> cached_inv_std_;
    Shape cached_shape_;
    bool has_cache_ = false;
};

class Hardtanh : public Layer {
public:
    LayerSpec::Kind kind() const override { return LayerSpec::Kind::hardtanh; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    Shape output_shape(const Shape& in) const override { return in; }

private:
    Tensor cached_input_;
    bool has_cache_ = false;
};

class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(int64_t window) : window(window) {}

    LayerSpec::Kind kind() const override { return LayerSpec::Kind::maxpool; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    Shape output_shape(const Shape& in) const override;

    int64_t window;

private:
    std::vector<int64_t> cached_argmax_;
    Shape cached_in_shape_;
    bool has_cache_ = false;
};

class Flatten : public Layer {
public:
    LayerSpec::Kind kind() const override { return LayerSpec::Kind::flatten; }
    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training) override;
    Tensor backward(const Tensor& upstream, const PrecisionContext& ctx) override;
    Shape output_shape(const Shape& in) const override;

private:
    Shape cached_in_shape_;
    bool has_cache_ = false;
};

// Sequential network. Single-threaded during a training step (layer caches are
// stateful); an inference-only forward on an immutable instance is safe for
// concurrent callers.
class Network {
public:
    std::vector<std::unique_ptr<Layer>> layers;

    Tensor forward(const Tensor& input, const PrecisionContext& ctx, bool training);
    void backward(const Tensor& loss_grad, const PrecisionContext& ctx);
    std::vector<Parameter*> parameters();
    std::vector<std::pair<std::string, Tensor*>> buffers();
    void zero_grad();
};

struct XentResult {
    double loss;
    Tensor grad_logits;
};

// mean cross entropy with log-sum-exp stabilization; grad = (softmax - onehot)/b
XentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// The desk-scale architecture: fp conv stem, two binary conv blocks with
// BN/Hardtanh/maxpool, fp linear head. First and last layers stay full
// precision unless binarize_first_last is set.
std::vector<LayerSpec> convnet_small_spec(bool binarize_first_last = false);

// Instantiates layers for the given per-sample input shape [c,h,w]; weights
// are He-uniform from the seeded generator, BN gamma=1/beta=0, bias=0.
Network build_network(const std::vector<LayerSpec>& specs, const Shape& input_chw,
                      int64_t class_count, uint64_t seed);

} // namespace cyclebnn
