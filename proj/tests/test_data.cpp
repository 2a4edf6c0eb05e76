#include <cstdio>
#include <cstdlib>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <set>

#include "cyclebnn/data.hpp"
#include "cyclebnn/error.hpp"
#include "cyclebnn/nn.hpp"
#include "cyclebnn/optim.hpp"

using namespace cyclebnn;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_idx_fixture(const std::string& img_path, const std::string& lab_path,
                       uint32_t magic_img = 0x00000803) {
    // 2 images of 2x2: pixels 0 and 255 in a fixed pattern
    std::ofstream img(img_path, std::ios::binary);
    auto be32 = [&img](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        img.write(reinterpret_cast<char*>(b), 4);
    };
    be32(magic_img);
    be32(2);
    be32(2);
    be32(2);
    const unsigned char pixels[8] = {0, 255, 255, 0, 255, 0, 0, 255};
    img.write(reinterpret_cast<const char*>(pixels), 8);
    img.close();

    std::ofstream lab(lab_path, std::ios::binary);
    auto lbe32 = [&lab](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        lab.write(reinterpret_cast<char*>(b), 4);
    };
    lbe32(0x00000801);
    lbe32(2);
    const unsigned char labels[2] = {0, 1};
    lab.write(reinterpret_cast<const char*>(labels), 2);
}

} // namespace

TEST_CASE("load_idx maps range endpoints to -1 and +1") {
    const std::string img = tmp_path("cbnn_test_images.idx");
    const std::string lab = tmp_path("cbnn_test_labels.idx");
    write_idx_fixture(img, lab);
    Dataset ds = load_idx(img, lab);
    CHECK(ds.size() == 2);
    CHECK(ds.images.shape() == Shape{2, 1, 2, 2});
    CHECK(ds.images[0] == -1.0f);
    CHECK(ds.images[1] == 1.0f);
    CHECK(ds.labels[0] == 0);
    CHECK(ds.labels[1] == 1);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
}

TEST_CASE("load_idx error tokens") {
    const std::string img = tmp_path("cbnn_bad_images.idx");
    const std::string lab = tmp_path("cbnn_bad_labels.idx");
    write_idx_fixture(img, lab, 0x00000804);
    CHECK_THROWS_WITH_AS(load_idx(img, lab), "bad-idx-magic", Error);

    write_idx_fixture(img, lab);
    std::filesystem::resize_file(img, 12); // cut into the payload
    CHECK_THROWS_WITH_AS(load_idx(img, lab), "truncated-file", Error);

    write_idx_fixture(img, lab);
    {
        std::ofstream lab2(lab, std::ios::binary);
        unsigned char hdr[8] = {0, 0, 8, 1, 0, 0, 0, 3}; // count 3 != 2
        lab2.write(reinterpret_cast<char*>(hdr), 8);
        const unsigned char labels[3] = {0, 1, 0};
        lab2.write(reinterpret_cast<const char*>(labels), 3);
    }
    CHECK_THROWS_WITH_AS(load_idx(img, lab), "label-count-mismatch", Error);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
}

TEST_CASE("idx round trip is the identity on pixel values") {
    Dataset ds = synth_dataset(16, 77);
    // snap pixels to the uint8 lattice first: the loader's domain
    const std::string img = tmp_path("cbnn_rt_images.idx");
    const std::string lab = tmp_path("cbnn_rt_labels.idx");
    save_idx(ds, img, lab);
    Dataset once = load_idx(img, lab);
    save_idx(once, img, lab);
    Dataset twice = load_idx(img, lab);
    REQUIRE(once.size() == twice.size());
    for (int64_t i = 0; i < once.images.numel(); ++i) REQUIRE(once.images[i] == twice.images[i]);
    for (size_t i = 0; i < once.labels.size(); ++i) REQUIRE(once.labels[i] == twice.labels[i]);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
}

TEST_CASE("synth_dataset determinism and balance") {
    Dataset a = synth_dataset(100, 42);
    Dataset b = synth_dataset(100, 42);
    REQUIRE(a.images.numel() == b.images.numel());
    for (int64_t i = 0; i < a.images.numel(); ++i) REQUIRE(a.images[i] == b.images[i]);
    int c0 = 0, c1 = 0;
    for (int l : a.labels) (l == 0 ? c0 : c1)++;
    CHECK(c0 == 50);
    CHECK(c1 == 50);
    for (int64_t i = 0; i < a.images.numel(); ++i) {
        REQUIRE(a.images[i] >= -1.0f);
        REQUIRE(a.images[i] <= 1.0f);
    }
    Dataset c = synth_dataset(100, 43);
    bool any_diff = false;
    for (int64_t i = 0; i < a.images.numel(); ++i)
        if (a.images[i] != c.images[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("separability oracle: a linear classifier hits 100% train accuracy") {
    Dataset ds = synth_dataset(200, 42);
    Network net;
    net.layers.push_back(std::make_unique<Flatten>());
    net.layers.push_back(std::make_unique<FpLinear>("l1", 64, 2));
    AdamW opt({0.9, 0.999, 1e-8, 0.0});
    PrecisionContext ctx;
    const auto params = net.parameters();
    double acc = 0.0;
    for (int step = 0; step < 100; ++step) {
        Tensor logits = net.forward(ds.images, ctx, true);
        XentResult r = softmax_cross_entropy(logits, ds.labels);
        int64_t correct = 0;
        for (int64_t i = 0; i < ds.size(); ++i) {
            const int pred = logits[i * 2] > logits[i * 2 + 1] ? 0 : 1;
            if (pred == ds.labels[static_cast<size_t>(i)]) ++correct;
        }
        acc = static_cast<double>(correct) / static_cast<double>(ds.size());
        if (acc == 1.0) break;
        net.zero_grad();
        net.backward(r.grad_logits, ctx);
        opt.step(params, 0.01);
    }
    CHECK(acc == 1.0);
}

TEST_CASE("batches sizes, determinism, coverage") {
    Dataset ds = synth_dataset(10, 5);
    auto bs = batches(ds, 4, 9, 0);
    REQUIRE(bs.size() == 3);
    CHECK(bs[0].images.shape()[0] == 4);
    CHECK(bs[1].images.shape()[0] == 4);
    CHECK(bs[2].images.shape()[0] == 2);

    // identical (seed, epoch) -> identical order
    auto order1 = epoch_permutation(10, 9, 3);
    auto order2 = epoch_permutation(10, 9, 3);
    CHECK(order1 == order2);
    CHECK(epoch_permutation(10, 9, 4) != order1);
    CHECK(epoch_permutation(10, 8, 3) != order1);

    // every sample exactly once per epoch
    std::set<int64_t> seen(order1.begin(), order1.end());
    CHECK(seen.size() == 10);

    // batch_size == n: one permuted batch
    auto whole = batches(ds, 10, 9, 0);
    CHECK(whole.size() == 1);
    CHECK(whole[0].images.shape()[0] == 10);

    CHECK_THROWS_WITH_AS(batches(ds, 0, 9, 0), "invalid-batch-size", Error);
}

TEST_CASE("subset keeps a prefix") {
    Dataset ds = synth_dataset(10, 5);
    Dataset first = subset(ds, 4);
    CHECK(first.size() == 4);
    for (int64_t i = 0; i < first.images.numel(); ++i) REQUIRE(first.images[i] == ds.images[i]);
}

TEST_CASE("official MNIST header parses when files are present") {
    const char* home = std::getenv("CYCLEBNN_MNIST_DIR");
    const std::string dir = home ? home : "data/mnist";
    const std::string img = dir + "/t10k-images-idx3-ubyte";
    const std::string lab = dir + "/t10k-labels-idx1-ubyte";
    if (!std::filesystem::exists(img) || !std::filesystem::exists(lab)) {
        MESSAGE("MNIST files not present; skipping");
        return;
    }
    Dataset ds = load_idx(img, lab);
    CHECK(ds.size() == 10000);
    CHECK(ds.images.shape() == Shape{10000, 1, 28, 28});
    CHECK(ds.class_count == 10);
}
