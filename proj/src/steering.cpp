#include "saelab/steering.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/core.h>
#include <json.hpp>

#include "saelab/binary_io.hpp"
#include "saelab/errors.hpp"

namespace saelab {

namespace {

void check_dim(const Vector& x, const SteeringVector& sv) {
    if (x.size() != sv.direction.size())
        throw InvalidArgument(fmt::format("steer: input dim {} != direction dim {}", x.size(), sv.direction.size()));
}

}  // namespace

SteeringVector feature_direction(const SaeParams& params, std::size_t k, std::string source_id) {
    if (k >= params.n) throw InvalidArgument(fmt::format("feature {} out of range [0, {})", k, params.n));
    Vector col = params.W_dec.col(static_cast<Eigen::Index>(k));
    double norm = col.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw NumericalError(fmt::format("decoder column {} has zero or non-finite norm", k));
    SteeringVector sv;
    sv.feature = static_cast<std::uint32_t>(k);
    sv.direction = col / norm;
    sv.source_id = std::move(source_id);
    return sv;
}

Vector steer(const Vector& x, const SteeringVector& sv, double lambda) {
    check_dim(x, sv);
    return x + lambda * sv.direction;
}

Vector steer_negative(const Vector& x, const SteeringVector& sv, double lambda) {
    check_dim(x, sv);
    return x - lambda * sv.direction;
}

Matrix steer_sequence(const Matrix& tokens, const SteeringVector& sv, double lambda,
                      const std::optional<std::vector<bool>>& position_mask) {
    if (tokens.cols() != sv.direction.size())
        throw InvalidArgument(fmt::format("steer_sequence: token dim {} != direction dim {}", tokens.cols(),
                                          sv.direction.size()));
    if (position_mask && position_mask->size() != static_cast<std::size_t>(tokens.rows()))
        throw InvalidArgument(fmt::format("steer_sequence: mask length {} != {} tokens", position_mask->size(),
                                          tokens.rows()));
    Matrix out = tokens;
    RowVector delta = lambda * sv.direction.transpose();
    for (Eigen::Index t = 0; t < out.rows(); ++t)
        if (!position_mask || (*position_mask)[static_cast<std::size_t>(t)]) out.row(t) += delta;
    return out;
}

Vector reconstruct_steer(const SaeParams& params, const SaeArchitecture& arch, const Vector& x, std::size_t k,
                         double value) {
    if (k >= params.n) throw InvalidArgument(fmt::format("feature {} out of range [0, {})", k, params.n));
    Vector z = encode(params, arch, x);
    z(static_cast<Eigen::Index>(k)) = value;
    return decode(params, z);
}

void write_steering(const std::vector<SteeringVector>& vectors, std::size_t d, const std::filesystem::path& path) {
    std::set<std::uint32_t> seen;
    io::ByteWriter w;
    w.magic(kSteeringMagic);
    w.u32(kSteeringVersion);
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(vectors.size()));
    nlohmann::json mirror = {{"version", kSteeringVersion}, {"d", d}, {"vectors", nlohmann::json::array()}};
    for (const auto& sv : vectors) {
        if (!seen.insert(sv.feature).second) throw InvalidArgument(fmt::format("duplicate feature id {}", sv.feature));
        if (static_cast<std::size_t>(sv.direction.size()) != d)
            throw InvalidArgument(fmt::format("feature {}: direction dim {} != {}", sv.feature, sv.direction.size(), d));
        w.u32(sv.feature);
        w.f32_block(std::span<const double>(sv.direction.data(), d), "steering direction");
        w.f32(static_cast<float>(sv.lambda_lo));
        w.f32(static_cast<float>(sv.lambda_hi));
        mirror["vectors"].push_back({{"feature", sv.feature},
                                     {"source", sv.source_id},
                                     {"lambda_range", {sv.lambda_lo, sv.lambda_hi}},
                                     {"direction", std::vector<double>(sv.direction.data(), sv.direction.data() + d)}});
    }
    w.write_file(path);
    std::filesystem::path json_path = path;
    json_path += ".json";
    std::ofstream out(json_path);
    if (!out) throw IoError(fmt::format("cannot write '{}'", json_path.string()));
    out << mirror.dump(2) << '\n';
}

void export_steering(const SaeParams& params, const std::vector<std::size_t>& feature_ids,
                     const std::filesystem::path& path, const std::string& source_id, double lambda_lo,
                     double lambda_hi) {
    std::set<std::size_t> seen;
    std::vector<SteeringVector> vectors;
    for (std::size_t k : feature_ids) {
        if (!seen.insert(k).second) throw InvalidArgument(fmt::format("duplicate feature id {}", k));
        auto sv = feature_direction(params, k, source_id);
        sv.lambda_lo = lambda_lo;
        sv.lambda_hi = lambda_hi;
        vectors.push_back(std::move(sv));
    }
    write_steering(vectors, params.d, path);
}

std::vector<SteeringVector> import_steering(const std::filesystem::path& path) {
    auto bytes = io::read_file(path);
    io::ByteReader r(bytes.data(), bytes.size());
    if (r.remaining() < 8 || r.string(8) != std::string(kSteeringMagic))
        throw FormatError(FormatErrc::UnrecognizedFormat, fmt::format("'{}' is not a steering file", path.string()));
    std::uint32_t version = r.u32();
    if (version != kSteeringVersion)
        throw FormatError(FormatErrc::UnsupportedVersion, fmt::format("unsupported steering version {}", version));
    std::size_t d = r.u32();
    std::size_t count = r.u32();
    std::vector<SteeringVector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SteeringVector sv;
        sv.feature = r.u32();
        sv.direction.resize(static_cast<Eigen::Index>(d));
        r.f32_block(std::span<double>(sv.direction.data(), d));
        sv.lambda_lo = r.f32();
        sv.lambda_hi = r.f32();
        out.push_back(std::move(sv));
    }
    if (r.remaining() != 0)
        throw FormatError(FormatErrc::TrailingBytes, fmt::format("'{}': {} trailing bytes", path.string(), r.remaining()));
    return out;
}

}  // namespace saelab
