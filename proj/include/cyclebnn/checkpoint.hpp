#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cyclebnn/bitkernel.hpp"
#include "cyclebnn/tensor.hpp"

namespace cyclebnn {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// CBNN checkpoint: magic "CBNN", u32 LE version (=1), then records until EOF:
// u16 LE name length, UTF-8 name, u8 rank, rank x u64 LE dims, raw f32 LE
// payload. Stores latent full-precision tensors; binarization is re-derived.
void save_cbnn(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_cbnn(const std::string& path);

// CBNP packed model: magic "CBNP", u32 LE version (=1), u32 LE record count,
// then per record: u16 LE name length, name, u8 kind (0 = f32 tensor,
// 1 = packed bits), u8 rank, rank x u64 LE dims, then either the f32 LE
// payload (kind 0) or u64 LE logical length, u64 LE word count and the packed
// words LE (kind 1, bit 1 <-> +1, LSB-first within each word).
struct PackedRecord {
    std::string name;
    uint8_t kind = 0; // 0 = float tensor, 1 = packed bits
    Shape shape;
    Tensor floats;   // kind 0
    PackedBits bits; // kind 1
};

void save_cbnp(const std::string& path, const std::vector<PackedRecord>& records);
std::vector<PackedRecord> load_cbnp(const std::string& path);

} // namespace cyclebnn
