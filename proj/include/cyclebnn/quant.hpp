#pragma once

#include <cstdint>

#include "cyclebnn/tensor.hpp"

namespace cyclebnn {

// Static quantizer parameters: p bits over [min_value, max_value]. The lattice
// has 2^p points spaced (max-min)/(2^p - 1) apart, endpoints included.
struct QuantSpec {
    int bits;
    double min_value;
    double max_value;

    QuantSpec(int bits, double min_value, double max_value);
};

// Sign binarizer: -1 for x < 0, +1 for x >= 0.
double sign(double x);

// Lattice rounding, input clamped to [min,max] first so the result always
// lies on the 2^p-point lattice and the operation is idempotent.
double quantize(double x, const QuantSpec& spec);

// Lattice rounding exactly as the static quantization formula reads, without
// clamping: out-of-range inputs land on lattice extensions beyond [min,max].
// The quantization-error integral uses this form.
double quantize_unclamped(double x, const QuantSpec& spec);

// elementwise clamped quantize
Tensor quantize_tensor(const Tensor& t, const QuantSpec& spec);

// w / sigma(w), population convention, no mean subtraction
Tensor standardize(const Tensor& w);

// Unnormalized Gaussian fitted to a weight histogram: A*exp(-(w-mu)^2/(2*sigma^2)).
struct GaussianFit {
    double amplitude;
    double mean;
    double sigma;

    GaussianFit(double amplitude, double mean, double sigma);
};

// Quantization-error integral configuration. [lo,hi] is the integration
// interval (the empirical weight range); [quant_lo,quant_hi] are the static
// quantizer bounds, defaulting to the binarization domain [-1,1]. `steps`
// subintervals of the composite midpoint rule.
struct QEConfig {
    double alpha = 1.0;
    double lo = -15.0;
    double hi = 15.0;
    int64_t steps = 300000;
    double quant_lo = -1.0;
    double quant_hi = 1.0;
};

void validate(const QEConfig& cfg);

// Density-weighted squared binarization residual of the p-bit-quantized
// weights: integral of f(Q(w)) * (Q(w) - alpha*Sign(Q(w)))^2 over [lo,hi],
// composite midpoint rule. Q is applied inside both f and Sign.
double quantization_error(const GaussianFit& fit, int bits, const QEConfig& cfg);

} // namespace cyclebnn
