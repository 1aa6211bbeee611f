#include "ecmoe/batch_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ecmoe {

static_assert(std::endian::native == std::endian::little,
              "the .moeb format is little-endian; byte swapping is not implemented");

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'B'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("read_moeb: truncated file");
    return v;
}

}  // namespace

void write_moeb(const std::string& path, const TokenBatch& batch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_moeb: cannot open " + path);
    out.write(kMagic, 4);
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint32_t>(batch.tokens()));
    write_raw(out, static_cast<std::uint32_t>(batch.dim()));
    write_raw(out, static_cast<std::uint8_t>(batch.has_ids() ? 1 : 0));
    for (std::size_t t = 0; t < batch.tokens(); ++t) {
        for (std::size_t j = 0; j < batch.dim(); ++j) {
            write_raw(out, static_cast<float>(batch.x(t, j)));
        }
    }
    if (batch.has_ids()) {
        if (batch.ids.size() != batch.tokens()) {
            throw std::invalid_argument("write_moeb: id count != token count");
        }
        for (std::uint32_t id : batch.ids) write_raw(out, id);
    }
    if (!out) throw std::runtime_error("write_moeb: write failed for " + path);
}

TokenBatch read_moeb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_moeb: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("read_moeb: bad magic in " + path);
    }
    const auto version = read_raw<std::uint16_t>(in);
    if (version != kVersion) {
        throw std::runtime_error("read_moeb: unsupported version " + std::to_string(version));
    }
    const auto n = read_raw<std::uint32_t>(in);
    const auto d = read_raw<std::uint32_t>(in);
    const auto has_ids = read_raw<std::uint8_t>(in);

    TokenBatch batch;
    batch.x = Matrix(n, d);
    for (std::uint32_t t = 0; t < n; ++t) {
        for (std::uint32_t j = 0; j < d; ++j) {
            batch.x(t, j) = static_cast<double>(read_raw<float>(in));
        }
    }
    if (has_ids) {
        batch.ids.resize(n);
        for (std::uint32_t t = 0; t < n; ++t) batch.ids[t] = read_raw<std::uint32_t>(in);
    }
    return batch;
}

}  // namespace ecmoe
