#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saelab/sae.hpp"
#include "saelab/types.hpp"

namespace saelab {

inline constexpr char kSteeringMagic[] = "SAESTR01";
inline constexpr std::uint32_t kSteeringVersion = 1;

struct SteeringVector {
    std::uint32_t feature = 0;
    Vector direction;  // unit L2
    std::string source_id;
    double lambda_lo = 0.0;
    double lambda_hi = 10.0;
};

/// Unit-normalized decoder column k. Throws NumericalError for a zero column.
SteeringVector feature_direction(const SaeParams& params, std::size_t k, std::string source_id = {});

/// x + lambda * direction.
Vector steer(const Vector& x, const SteeringVector& sv, double lambda);
/// x - lambda * direction.
Vector steer_negative(const Vector& x, const SteeringVector& sv, double lambda);
/// Row-wise steer over a T x d token matrix. Rows where mask is false are copied unchanged.
Matrix steer_sequence(const Matrix& tokens, const SteeringVector& sv, double lambda,
                      const std::optional<std::vector<bool>>& position_mask = std::nullopt);

/// Alternative reading: encode x, set z_k = value, decode.
Vector reconstruct_steer(const SaeParams& params, const SaeArchitecture& arch, const Vector& x, std::size_t k,
                         double value);

/// Writes the binary steering file and a JSON mirror at `path` + ".json".
void export_steering(const SaeParams& params, const std::vector<std::size_t>& feature_ids,
                     const std::filesystem::path& path, const std::string& source_id = {},
                     double lambda_lo = 0.0, double lambda_hi = 10.0);
void write_steering(const std::vector<SteeringVector>& vectors, std::size_t d, const std::filesystem::path& path);
std::vector<SteeringVector> import_steering(const std::filesystem::path& path);

}  // namespace saelab
