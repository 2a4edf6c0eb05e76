#pragma once

#include <cstdint>
#include <vector>

#include "cyclebnn/tensor.hpp"

namespace cyclebnn {

// Bit-packed encoding of a {-1,+1} tensor: bit 1 <-> +1, bit 0 <-> -1,
// LSB-first within each 64-bit word. Padding bits beyond logical_len are zero.
struct PackedBits {
    std::vector<uint64_t> words;
    int64_t logical_len = 0;
};

// every element must be exactly +-1, else "not-binarized"
PackedBits pack(const Tensor& signs);

Tensor unpack(const PackedBits& p, const Shape& shape);

// +-1 dot product via n - 2*popcount(a XOR w); padding bits are masked out.
int64_t xnor_popcount_dot(const PackedBits& a, const PackedBits& w);

// Raw BitCount(a XOR w): the number of mismatching sign positions, i.e. the
// bit-domain convolution output before the affine recovery.
int64_t raw_bitcount(const PackedBits& a, const PackedBits& w);

// Conv weights packed one filter per output channel; each filter holds its
// c_in*k_h*k_w taps row-major.
struct PackedConvWeights {
    int64_t c_out = 0;
    int64_t c_in = 0;
    int64_t k_h = 0;
    int64_t k_w = 0;
    std::vector<PackedBits> filters;
};

PackedConvWeights pack_conv_weights(const Tensor& w_bin);

// Bit-domain convolution over a packed [c_in,h,w] input. Zero padding is
// handled by masking out-of-range taps: each window uses
// dot = n_valid - 2*popcount((a XOR w) AND valid), so excluded taps contribute
// zero exactly like the float reference's zero padding. Output values are
// integers stored as floats, equal to conv2d_ref on the unpacked operands.
Tensor packed_conv2d(const PackedBits& input, const Shape& input_shape,
                     const PackedConvWeights& weights, int64_t stride, int64_t padding);

} // namespace cyclebnn
