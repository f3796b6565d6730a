#pragma once

// Little-endian helpers shared by every on-disk artifact (datasets, checkpoints,
// probe weights, steering files).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saelab::io {

static_assert(std::endian::native == std::endian::little, "saelab assumes a little-endian host");

/// Append-only byte buffer; flushed to disk in one write.
class ByteWriter {
public:
    void bytes(const void* data, std::size_t size);
    void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    /// Narrow doubles to f32; throws InvalidArgument if a value is not representable.
    void f32_block(std::span<const double> values, std::string_view what);

    const std::vector<char>& buffer() const { return buf_; }
    void write_file(const std::filesystem::path& path) const;

private:
    std::vector<char> buf_;
};

/// Bounds-checked cursor over an in-memory byte range.
class ByteReader {
public:
    ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t remaining() const { return size_ - pos_; }
    std::size_t position() const { return pos_; }
    bool has(std::size_t n) const { return remaining() >= n; }

    void bytes(void* out, std::size_t n);
    std::string string(std::size_t n);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    void f32_block(std::span<double> out);

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

}  // namespace saelab::io
