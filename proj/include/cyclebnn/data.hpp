#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cyclebnn/tensor.hpp"

namespace cyclebnn {

// Images normalized to [-1,1] (x/127.5 - 1), labels in [0, class_count).
// Immutable after load; batch iteration only reads.
struct Dataset {
    Tensor images; // [n, c, h, w]
    std::vector<int> labels;
    int class_count = 0;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

// IDX (MNIST layout): big-endian magic + dims, raw uint8 payload.
// magic 0x00000803 = uint8 rank-3 images, 0x00000801 = uint8 rank-1 labels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// inverse of load_idx's normalization; used for fixtures and round-trip checks
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// keep the first n samples
Dataset subset(const Dataset& ds, int64_t n);

// Two-class 1x8x8 toy set: class 0 has a bright left half, class 1 a bright
// right half, plus Gaussian noise; labels alternate. Fully determined by the
// seed (splitmix64-seeded xoshiro256++, Box-Muller noise).
Dataset synth_dataset(int64_t n, uint64_t seed);

// Fisher-Yates permutation keyed on (shuffle_seed, epoch)
std::vector<int64_t> epoch_permutation(int64_t n, uint64_t shuffle_seed, int64_t epoch);

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

// permuted batches for one epoch; the final short batch is retained
std::vector<Batch> batches(const Dataset& ds, int64_t batch_size, uint64_t shuffle_seed,
                           int64_t epoch);

Batch gather(const Dataset& ds, const std::vector<int64_t>& order, int64_t from, int64_t count);

} // namespace cyclebnn
