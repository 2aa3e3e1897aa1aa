#include "plab/idx.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace plab {

namespace {

void put_be32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw Error("idx: truncated header in " + path);
    return ((std::uint32_t)b[0] << 24) | ((std::uint32_t)b[1] << 16) | ((std::uint32_t)b[2] << 8) |
           b[3];
}

std::uint64_t be64_bits(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b[i];
    return v;
}

void write_header(std::ofstream& f, int type, const std::vector<int>& shape) {
    put_be32(f, (std::uint32_t)((type << 8) | shape.size()));
    for (int d : shape) put_be32(f, (std::uint32_t)d);
}

} // namespace

Tensor load_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("idx: cannot open " + path);
    std::uint32_t magic = get_be32(f, path);
    if ((magic & 0xFFFF0000u) != 0)
        throw Error("idx: bad magic 0x" + std::to_string(magic) + " in " + path);
    int type = (int)((magic >> 8) & 0xFF);
    int ndim = (int)(magic & 0xFF);
    if (ndim < 1 || ndim > 4) throw Error("idx: unsupported rank in " + path);
    std::vector<int> shape(ndim);
    std::size_t n = 1;
    for (int i = 0; i < ndim; ++i) {
        shape[i] = (int)get_be32(f, path);
        if (shape[i] <= 0) throw Error("idx: bad dimension in " + path);
        n *= (std::size_t)shape[i];
    }
    std::size_t header = 4 + 4 * (std::size_t)ndim;
    f.seekg(0, std::ios::end);
    std::size_t file_size = (std::size_t)f.tellg();
    f.seekg((std::streamoff)header);

    Tensor t(shape);
    if (type == 0x08) {
        std::size_t expect = header + n;
        if (file_size != expect)
            throw Error("idx: truncated payload in " + path + ": expected " +
                        std::to_string(expect) + " bytes, got " + std::to_string(file_size));
        std::vector<unsigned char> buf(n);
        f.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)n);
        for (std::size_t i = 0; i < n; ++i) t.data[i] = buf[i] / 255.0;
    } else if (type == 0x0E) {
        std::size_t expect = header + 8 * n;
        if (file_size != expect)
            throw Error("idx: truncated payload in " + path + ": expected " +
                        std::to_string(expect) + " bytes, got " + std::to_string(file_size));
        std::vector<unsigned char> buf(8 * n);
        f.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)buf.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = be64_bits(&buf[8 * i]);
            double v;
            std::memcpy(&v, &bits, 8);
            t.data[i] = v;
        }
        for (double v : t.data)
            if (!std::isfinite(v)) throw Error("idx: non-finite value in " + path);
    } else {
        throw Error("idx: unsupported type code in " + path);
    }
    return t;
}

std::vector<int> load_idx_labels(const std::string& path) {
    Tensor t = load_idx(path);
    if (t.ndim() != 1) throw Error("idx: label file must be rank 1: " + path);
    std::vector<int> out(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i)
        out[i] = (int)std::lround(t.data[i] * 255.0);
    return out;
}

void save_idx_ubyte(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("idx: cannot open " + path + " for writing");
    write_header(f, 0x08, t.shape);
    std::vector<unsigned char> buf(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        double v = t.data[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        buf[i] = (unsigned char)std::lround(v * 255.0);
    }
    f.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)buf.size());
    if (!f) throw Error("idx: write failed for " + path);
}

void save_idx_double(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("idx: cannot open " + path + " for writing");
    write_header(f, 0x0E, t.shape);
    std::vector<unsigned char> buf(8 * t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &t.data[i], 8);
        for (int j = 7; j >= 0; --j) {
            buf[8 * i + j] = (unsigned char)(bits & 0xFF);
            bits >>= 8;
        }
    }
    f.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)buf.size());
    if (!f) throw Error("idx: write failed for " + path);
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("idx: cannot open " + path + " for writing");
    write_header(f, 0x08, {(int)labels.size()});
    std::vector<unsigned char> buf(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 255) throw Error("idx: label out of byte range");
        buf[i] = (unsigned char)labels[i];
    }
    f.write(reinterpret_cast<const char*>(buf.data()), (std::streamsize)buf.size());
    if (!f) throw Error("idx: write failed for " + path);
}

} // namespace plab
