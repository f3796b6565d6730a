#include "saelab/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab::io {

void ByteWriter::bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + size);
}

void ByteWriter::f32_block(std::span<const double> values, std::string_view what) {
    const std::size_t start = buf_.size();
    buf_.resize(start + values.size() * sizeof(float));
    char* out = buf_.data() + start;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto f = static_cast<float>(values[i]);
        if (!std::isfinite(f)) {
            throw InvalidArgument(fmt::format("{}: entry {} is not finite in f32", what, i));
        }
        std::memcpy(out + i * sizeof(float), &f, sizeof(float));
    }
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    out.flush();
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

void ByteReader::bytes(void* out, std::size_t n) {
    if (!has(n)) {
        throw FormatError(FormatErrc::TruncatedHeader,
                          fmt::format("truncated: need {} bytes at offset {}, have {}", n, pos_, remaining()));
    }
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
}

std::string ByteReader::string(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

std::uint8_t ByteReader::u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
}

std::uint32_t ByteReader::u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
}

std::uint64_t ByteReader::u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
}

float ByteReader::f32() {
    float v;
    bytes(&v, 4);
    return v;
}

void ByteReader::f32_block(std::span<double> out) {
    const std::size_t n = out.size() * sizeof(float);
    if (!has(n)) {
        throw FormatError(FormatErrc::TruncatedPayload,
                          fmt::format("truncated payload: expected {} bytes at offset {}, have {}", n, pos_,
                                      remaining()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, data_ + pos_ + i * sizeof(float), sizeof(float));
        if (!std::isfinite(f)) {
            throw FormatError(FormatErrc::NonFinite, fmt::format("non-finite value at offset {}", pos_ + i * 4));
        }
        out[i] = f;
    }
    pos_ += n;
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<char> buf(size);
    in.seekg(0);
    in.read(buf.data(), static_cast<std::streamsize>(size));
    if (!in) throw IoError(fmt::format("read failed for '{}'", path.string()));
    return buf;
}

}  // namespace saelab::io
