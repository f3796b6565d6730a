#include <bit>
#include <cstring>

#include <fmt/core.h>

#include "saelab/binary_io.hpp"
#include "saelab/errors.hpp"
#include "saelab/sae.hpp"

namespace saelab {

namespace {

constexpr std::size_t kMagicLen = 8;

void resize_like_kind(SaeParams& p, SaeKind kind) {
    const auto d = static_cast<Eigen::Index>(p.d);
    const auto n = static_cast<Eigen::Index>(p.n);
    p.W_enc.resize(n, d);
    p.b_enc.resize(n);
    p.W_dec.resize(d, n);
    p.b_dec.resize(d);
    if (kind == SaeKind::Gated) {
        p.W_gate.resize(n, d);
        p.b_gate.resize(n);
        p.W_mag.resize(n, d);
        p.b_mag.resize(n);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SaeParams& params, const SaeArchitecture& arch) {
    if (arch.kind == SaeKind::Gated && !params.has_gate()) {
        throw InvalidArgument("gated checkpoint requires gate parameters");
    }
    io::ByteWriter w;
    w.magic(std::string_view(kCheckpointMagic, kMagicLen));
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(arch.kind));
    w.u32(static_cast<std::uint32_t>(params.d));
    w.u32(static_cast<std::uint32_t>(params.n));
    if (arch.kind == SaeKind::TopK) {
        w.u32(arch.k);
    } else {
        w.f32(static_cast<float>(arch.lambda));
    }
    const auto blocks = params.blocks();
    const char* names[] = {"W_enc", "b_enc", "W_dec", "b_dec", "W_gate", "b_gate", "W_mag", "b_mag"};
    const std::size_t count = arch.kind == SaeKind::Gated ? 8 : 4;
    for (std::size_t i = 0; i < count; ++i) w.f32_block(blocks[i], names[i]);
    w.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0) {
        throw FormatError(FormatErrc::UnrecognizedFormat,
                          fmt::format("unrecognized format: '{}' is not an SAEPRM01 checkpoint", path.string()));
    }
    io::ByteReader r(bytes.data(), bytes.size());
    r.string(kMagicLen);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError(FormatErrc::UnsupportedVersion, fmt::format("unsupported checkpoint version {}", version));
    }
    const std::uint8_t kind_byte = r.u8();
    if (kind_byte > 2) throw FormatError(FormatErrc::BadHeader, fmt::format("unknown SAE kind {}", kind_byte));
    Checkpoint ck;
    ck.arch.kind = static_cast<SaeKind>(kind_byte);
    ck.params.d = r.u32();
    ck.params.n = r.u32();
    if (ck.params.d == 0 || ck.params.n == 0) throw FormatError(FormatErrc::BadHeader, "checkpoint has zero dims");
    if (ck.arch.kind == SaeKind::TopK) {
        ck.arch.k = r.u32();
    } else {
        ck.arch.lambda = r.f32();
    }
    resize_like_kind(ck.params, ck.arch.kind);
    for (auto block : ck.params.blocks()) r.f32_block(block);
    if (r.remaining() != 0) {
        throw FormatError(FormatErrc::TrailingBytes, fmt::format("{} trailing bytes in checkpoint", r.remaining()));
    }
    ck.arch.validate(ck.params.n);
    return ck;
}

std::uint64_t params_checksum(const SaeParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto block : params.blocks()) {
        for (double v : block) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int s = 0; s < 32; s += 8) {
                h ^= (bits >> s) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

}  // namespace saelab
