#include "cyclebnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cyclebnn/error.hpp"
#include "cyclebnn/rng.hpp"

namespace cyclebnn {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    CBNN_CHECK(in.gcount() == 4, "truncated-file");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    CBNN_CHECK(img.good(), "truncated-file");
    CBNN_CHECK(read_be32(img) == kImagesMagic, "bad-idx-magic");
    const int64_t n = read_be32(img);
    const int64_t h = read_be32(img);
    const int64_t w = read_be32(img);

    std::vector<unsigned char> pixels(static_cast<size_t>(n * h * w));
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    CBNN_CHECK(img.gcount() == static_cast<std::streamsize>(pixels.size()), "truncated-file");

    std::ifstream lab(labels_path, std::ios::binary);
    CBNN_CHECK(lab.good(), "truncated-file");
    CBNN_CHECK(read_be32(lab) == kLabelsMagic, "bad-idx-magic");
    const int64_t ln = read_be32(lab);
    CBNN_CHECK(ln == n, "label-count-mismatch");
    std::vector<unsigned char> raw_labels(static_cast<size_t>(ln));
    lab.read(reinterpret_cast<char*>(raw_labels.data()),
             static_cast<std::streamsize>(raw_labels.size()));
    CBNN_CHECK(lab.gcount() == static_cast<std::streamsize>(raw_labels.size()), "truncated-file");

    Dataset ds;
    ds.images = Tensor(Shape{n, 1, h, w});
    for (int64_t i = 0; i < n * h * w; ++i)
        ds.images[i] = static_cast<float>(pixels[static_cast<size_t>(i)] / 127.5 - 1.0);
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.class_count = max_label + 1;
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    CBNN_CHECK(ds.images.shape().rank() == 4 && ds.images.shape()[1] == 1, "incompatible-shapes");
    const int64_t n = ds.images.shape()[0];
    const int64_t h = ds.images.shape()[2];
    const int64_t w = ds.images.shape()[3];
    CBNN_CHECK(static_cast<int64_t>(ds.labels.size()) == n, "label-count-mismatch");

    std::ofstream img(images_path, std::ios::binary);
    CBNN_CHECK(img.good(), "truncated-file");
    write_be32(img, kImagesMagic);
    write_be32(img, static_cast<uint32_t>(n));
    write_be32(img, static_cast<uint32_t>(h));
    write_be32(img, static_cast<uint32_t>(w));
    for (int64_t i = 0; i < n * h * w; ++i) {
        const double v = std::round((static_cast<double>(ds.images[i]) + 1.0) * 127.5);
        const double clamped = std::clamp(v, 0.0, 255.0);
        const unsigned char byte = static_cast<unsigned char>(clamped);
        img.write(reinterpret_cast<const char*>(&byte), 1);
    }

    std::ofstream lab(labels_path, std::ios::binary);
    CBNN_CHECK(lab.good(), "truncated-file");
    write_be32(lab, kLabelsMagic);
    write_be32(lab, static_cast<uint32_t>(n));
    for (int l : ds.labels) {
        const unsigned char byte = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

Dataset subset(const Dataset& ds, int64_t n) {
    CBNN_CHECK(n >= 1 && n <= ds.size(), "incompatible-shapes");
    const Shape& s = ds.images.shape();
    const int64_t per = s[1] * s[2] * s[3];
    Dataset out;
    out.images = Tensor(Shape{n, s[1], s[2], s[3]});
    std::copy(ds.images.data(), ds.images.data() + n * per, out.images.data());
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
    out.class_count = ds.class_count;
    return out;
}

Dataset synth_dataset(int64_t n, uint64_t seed) {
    CBNN_CHECK(n >= 2, "invalid-dataset-size");
    const int64_t h = 8, w = 8;
    Rng rng(seed);
    Dataset ds;
    ds.images = Tensor(Shape{n, 1, h, w});
    ds.labels.resize(static_cast<size_t>(n));
    ds.class_count = 2;
    for (int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        ds.labels[static_cast<size_t>(i)] = label;
        float* img = ds.images.data() + i * h * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const bool bright = (label == 0) ? (x < w / 2) : (x >= w / 2);
                const double base = bright ? 0.7 : -0.7;
                const double v = base + 0.2 * rng.normal();
                img[y * w + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
        }
    }
    return ds;
}

std::vector<int64_t> epoch_permutation(int64_t n, uint64_t shuffle_seed, int64_t epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(shuffle_seed, static_cast<uint64_t>(epoch)));
    for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    return order;
}

Batch gather(const Dataset& ds, const std::vector<int64_t>& order, int64_t from, int64_t count) {
    const Shape& s = ds.images.shape();
    const int64_t per = s[1] * s[2] * s[3];
    Batch batch;
    batch.images = Tensor(Shape{count, s[1], s[2], s[3]});
    batch.labels.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int64_t src = order[static_cast<size_t>(from + i)];
        std::copy(ds.images.data() + src * per, ds.images.data() + (src + 1) * per,
                  batch.images.data() + i * per);
        batch.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
    }
    return batch;
}

std::vector<Batch> batches(const Dataset& ds, int64_t batch_size, uint64_t shuffle_seed,
                           int64_t epoch) {
    CBNN_CHECK(batch_size >= 1, "invalid-batch-size");
    const std::vector<int64_t> order = epoch_permutation(ds.size(), shuffle_seed, epoch);
    std::vector<Batch> out;
    for (int64_t from = 0; from < ds.size(); from += batch_size) {
        const int64_t count = std::min(batch_size, ds.size() - from);
        out.push_back(gather(ds, order, from, count));
    }
    return out;
}

} // namespace cyclebnn
