#include "cyclebnn/bitkernel.hpp"

#include <bit>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

namespace {

inline int64_t word_count(int64_t bits) { return (bits + 63) / 64; }

inline uint64_t tail_mask(int64_t logical_len) {
    const int64_t rem = logical_len % 64;
    return rem == 0 ? ~uint64_t{0} : ((uint64_t{1} << rem) - 1);
}

// Appends bits one at a time; windows are small so this stays cheap.
struct BitWriter {
    std::vector<uint64_t>& words;
    int64_t cursor = 0;

    void push(bool bit) {
        if (bit) words[static_cast<size_t>(cursor >> 6)] |= uint64_t{1} << (cursor & 63);
        ++cursor;
    }
};

inline bool get_bit(const std::vector<uint64_t>& words, int64_t idx) {
    return (words[static_cast<size_t>(idx >> 6)] >> (idx & 63)) & 1;
}

} // namespace

PackedBits pack(const Tensor& signs) {
    PackedBits out;
    out.logical_len = signs.numel();
    out.words.assign(static_cast<size_t>(word_count(out.logical_len)), 0);
    for (int64_t i = 0; i < out.logical_len; ++i) {
        const float v = signs[i];
        CBNN_CHECK(v == 1.0f || v == -1.0f, "not-binarized");
        if (v == 1.0f) out.words[static_cast<size_t>(i >> 6)] |= uint64_t{1} << (i & 63);
    }
    return out;
}

Tensor unpack(const PackedBits& p, const Shape& shape) {
    CBNN_CHECK(shape.numel() == p.logical_len, "incompatible-shapes");
    Tensor out(shape);
    for (int64_t i = 0; i < p.logical_len; ++i)
        out[i] = get_bit(p.words, i) ? 1.0f : -1.0f;
    return out;
}

int64_t raw_bitcount(const PackedBits& a, const PackedBits& w) {
    CBNN_CHECK(a.logical_len == w.logical_len, "length-mismatch");
    int64_t mismatches = 0;
    const size_t nw = a.words.size();
    for (size_t i = 0; i < nw; ++i) {
        uint64_t x = a.words[i] ^ w.words[i];
        if (i + 1 == nw) x &= tail_mask(a.logical_len);
        mismatches += std::popcount(x);
    }
    return mismatches;
}

int64_t xnor_popcount_dot(const PackedBits& a, const PackedBits& w) {
    return a.logical_len - 2 * raw_bitcount(a, w);
}

PackedConvWeights pack_conv_weights(const Tensor& w_bin) {
    CBNN_CHECK(w_bin.shape().rank() == 4, "incompatible-shapes");
    PackedConvWeights out;
    out.c_out = w_bin.shape()[0];
    out.c_in = w_bin.shape()[1];
    out.k_h = w_bin.shape()[2];
    out.k_w = w_bin.shape()[3];
    const int64_t filter_len = out.c_in * out.k_h * out.k_w;
    out.filters.reserve(static_cast<size_t>(out.c_out));
    for (int64_t o = 0; o < out.c_out; ++o) {
        std::vector<float> taps(static_cast<size_t>(filter_len));
        for (int64_t i = 0; i < filter_len; ++i) taps[static_cast<size_t>(i)] = w_bin[o * filter_len + i];
        out.filters.push_back(pack(Tensor(Shape{filter_len}, std::move(taps))));
    }
    return out;
}

Tensor packed_conv2d(const PackedBits& input, const Shape& input_shape,
                     const PackedConvWeights& weights, int64_t stride, int64_t padding) {
    CBNN_CHECK(stride >= 1 && padding >= 0, "incompatible-shapes");
    CBNN_CHECK(input_shape.rank() == 3, "incompatible-shapes");
    CBNN_CHECK(input_shape.numel() == input.logical_len, "length-mismatch");
    const int64_t ci = input_shape[0];
    const int64_t h = input_shape[1];
    const int64_t w = input_shape[2];
    CBNN_CHECK(weights.c_in == ci, "incompatible-shapes");
    CBNN_CHECK(weights.k_h <= h + 2 * padding && weights.k_w <= w + 2 * padding,
               "kernel-too-large");

    const int64_t oh = (h + 2 * padding - weights.k_h) / stride + 1;
    const int64_t ow = (w + 2 * padding - weights.k_w) / stride + 1;
    const int64_t window_bits = ci * weights.k_h * weights.k_w;
    const size_t nwords = static_cast<size_t>(word_count(window_bits));

    Tensor out(Shape{weights.c_out, oh, ow});
    std::vector<uint64_t> awin(nwords), valid(nwords);

    for (int64_t y = 0; y < oh; ++y) {
        for (int64_t x = 0; x < ow; ++x) {
            std::fill(awin.begin(), awin.end(), 0);
            std::fill(valid.begin(), valid.end(), 0);
            BitWriter aw{awin};
            BitWriter vw{valid};
            for (int64_t i = 0; i < ci; ++i) {
                for (int64_t u = 0; u < weights.k_h; ++u) {
                    const int64_t row = y * stride - padding + u;
                    const bool row_ok = row >= 0 && row < h;
                    for (int64_t v = 0; v < weights.k_w; ++v) {
                        const int64_t col = x * stride - padding + v;
                        if (row_ok && col >= 0 && col < w) {
                            aw.push(get_bit(input.words, (i * h + row) * w + col));
                            vw.push(true);
                        } else {
                            aw.push(false);
                            vw.push(false);
                        }
                    }
                }
            }
            int64_t n_valid = 0;
            for (uint64_t word : valid) n_valid += std::popcount(word);

            for (int64_t o = 0; o < weights.c_out; ++o) {
                const auto& f = weights.filters[static_cast<size_t>(o)].words;
                int64_t mism = 0;
                for (size_t k = 0; k < nwords; ++k)
                    mism += std::popcount((awin[k] ^ f[k]) & valid[k]);
                out[(o * oh + y) * ow + x] = static_cast<float>(n_valid - 2 * mism);
            }
        }
    }
    return out;
}

} // namespace cyclebnn
