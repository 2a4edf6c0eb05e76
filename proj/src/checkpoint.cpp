#include "cyclebnn/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "cyclebnn/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization reads/writes little-endian payloads directly");

namespace cyclebnn {

namespace {

template <typename T> void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T> bool read_raw(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return in.gcount() == sizeof(T);
}

template <typename T> void read_or_throw(std::istream& in, T& v) {
    CBNN_CHECK(read_raw(in, v), "truncated-file");
}

std::string read_name(std::istream& in, uint16_t len) {
    std::string name(len, '\0');
    in.read(name.data(), len);
    CBNN_CHECK(in.gcount() == static_cast<std::streamsize>(len), "truncated-file");
    return name;
}

Shape read_dims(std::istream& in, uint8_t rank) {
    std::vector<int64_t> dims(rank);
    for (uint8_t i = 0; i < rank; ++i) {
        uint64_t d = 0;
        read_or_throw(in, d);
        dims[i] = static_cast<int64_t>(d);
    }
    return Shape(std::move(dims));
}

} // namespace

void save_cbnn(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    CBNN_CHECK(out.good(), "cannot-open-file");
    out.write("CBNN", 4);
    write_raw(out, uint32_t{1});
    for (const NamedTensor& nt : tensors) {
        CBNN_CHECK(nt.name.size() <= UINT16_MAX, "name-too-long");
        CBNN_CHECK(nt.tensor.shape().rank() <= UINT8_MAX, "incompatible-shapes");
        write_raw(out, static_cast<uint16_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_raw(out, static_cast<uint8_t>(nt.tensor.shape().rank()));
        for (int64_t d : nt.tensor.shape().dims()) write_raw(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(nt.tensor.data()),
                  static_cast<std::streamsize>(nt.tensor.numel() * sizeof(float)));
    }
    CBNN_CHECK(out.good(), "cannot-open-file");
}

std::vector<NamedTensor> load_cbnn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    CBNN_CHECK(in.good(), "cannot-open-file");
    char magic[4];
    in.read(magic, 4);
    CBNN_CHECK(in.gcount() == 4 && std::string(magic, 4) == "CBNN", "bad-checkpoint-magic");
    uint32_t version = 0;
    read_or_throw(in, version);
    CBNN_CHECK(version == 1, "bad-checkpoint-version");

    std::vector<NamedTensor> out;
    for (;;) {
        uint16_t name_len = 0;
        if (!read_raw(in, name_len)) break; // clean EOF between records
        NamedTensor nt;
        nt.name = read_name(in, name_len);
        uint8_t rank = 0;
        read_or_throw(in, rank);
        Shape shape = read_dims(in, rank);
        std::vector<float> values(static_cast<size_t>(shape.numel()));
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(float)));
        CBNN_CHECK(in.gcount() == static_cast<std::streamsize>(values.size() * sizeof(float)),
                   "truncated-file");
        nt.tensor = Tensor(std::move(shape), std::move(values));
        out.push_back(std::move(nt));
    }
    return out;
}

void save_cbnp(const std::string& path, const std::vector<PackedRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    CBNN_CHECK(out.good(), "cannot-open-file");
    out.write("CBNP", 4);
    write_raw(out, uint32_t{1});
    write_raw(out, static_cast<uint32_t>(records.size()));
    for (const PackedRecord& r : records) {
        CBNN_CHECK(r.name.size() <= UINT16_MAX, "name-too-long");
        write_raw(out, static_cast<uint16_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_raw(out, r.kind);
        write_raw(out, static_cast<uint8_t>(r.shape.rank()));
        for (int64_t d : r.shape.dims()) write_raw(out, static_cast<uint64_t>(d));
        if (r.kind == 0) {
            CBNN_CHECK(r.floats.shape() == r.shape, "incompatible-shapes");
            out.write(reinterpret_cast<const char*>(r.floats.data()),
                      static_cast<std::streamsize>(r.floats.numel() * sizeof(float)));
        } else {
            CBNN_CHECK(r.bits.logical_len == r.shape.numel(), "incompatible-shapes");
            write_raw(out, static_cast<uint64_t>(r.bits.logical_len));
            write_raw(out, static_cast<uint64_t>(r.bits.words.size()));
            out.write(reinterpret_cast<const char*>(r.bits.words.data()),
                      static_cast<std::streamsize>(r.bits.words.size() * sizeof(uint64_t)));
        }
    }
    CBNN_CHECK(out.good(), "cannot-open-file");
}

std::vector<PackedRecord> load_cbnp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    CBNN_CHECK(in.good(), "cannot-open-file");
    char magic[4];
    in.read(magic, 4);
    CBNN_CHECK(in.gcount() == 4 && std::string(magic, 4) == "CBNP", "bad-packed-magic");
    uint32_t version = 0;
    read_or_throw(in, version);
    CBNN_CHECK(version == 1, "bad-packed-version");
    uint32_t count = 0;
    read_or_throw(in, count);

    std::vector<PackedRecord> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        PackedRecord r;
        uint16_t name_len = 0;
        read_or_throw(in, name_len);
        r.name = read_name(in, name_len);
        read_or_throw(in, r.kind);
        CBNN_CHECK(r.kind == 0 || r.kind == 1, "bad-packed-record");
        uint8_t rank = 0;
        read_or_throw(in, rank);
        r.shape = read_dims(in, rank);
        if (r.kind == 0) {
            std::vector<float> values(static_cast<size_t>(r.shape.numel()));
            in.read(reinterpret_cast<char*>(values.data()),
                    static_cast<std::streamsize>(values.size() * sizeof(float)));
            CBNN_CHECK(in.gcount() == static_cast<std::streamsize>(values.size() * sizeof(float)),
                       "truncated-file");
            r.floats = Tensor(r.shape, std::move(values));
        } else {
            uint64_t logical_len = 0, word_count = 0;
            read_or_throw(in, logical_len);
            read_or_throw(in, word_count);
            CBNN_CHECK(static_cast<int64_t>(logical_len) == r.shape.numel(), "bad-packed-record");
            CBNN_CHECK(word_count == (logical_len + 63) / 64, "bad-packed-record");
            r.bits.logical_len = static_cast<int64_t>(logical_len);
            r.bits.words.resize(word_count);
            in.read(reinterpret_cast<char*>(r.bits.words.data()),
                    static_cast<std::streamsize>(word_count * sizeof(uint64_t)));
            CBNN_CHECK(in.gcount() == static_cast<std::streamsize>(word_count * sizeof(uint64_t)),
                       "truncated-file");
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace cyclebnn
