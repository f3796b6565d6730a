#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saelab/activation_store.hpp"
#include "saelab/types.hpp"

namespace saelab {

enum class SaeKind : std::uint8_t { Relu = 0, TopK = 1, Gated = 2 };

std::string_view to_string(SaeKind kind);
SaeKind parse_sae_kind(std::string_view name);

struct SaeArchitecture {
    SaeKind kind = SaeKind::Relu;
    double lambda = 0.0;  // relu / gated
    std::uint32_t k = 0;  // topk
    // Adds b_enc and a ReLU to the TopK encoder. Off: z = TopK(W_enc x) exactly.
    bool topk_use_bias = false;
    // Gated only: magnitude path shares the gate matrix.
    bool tie_gate_weights = false;

    static SaeArchitecture relu(double lambda) { return {SaeKind::Relu, lambda, 0, false, false}; }
    static SaeArchitecture topk(std::uint32_t k) { return {SaeKind::TopK, 0.0, k, false, false}; }
    static SaeArchitecture gated(double lambda) { return {SaeKind::Gated, lambda, 0, false, false}; }

    /// Throws InvalidArgument unless lambda >= 0 (relu/gated) or 1 <= k <= n (topk).
    void validate(std::size_t n_latents) const;
    bool uses_l1() const { return kind != SaeKind::TopK; }
};

/// Encoder/decoder weights. W_enc is n x d, W_dec is d x n. Gate blocks are
/// empty unless kind is gated. For gated SAEs encode() reads only the gate and
/// magnitude blocks; W_enc/b_enc are carried for format compatibility.
struct SaeParams {
    std::size_t d = 0;
    std::size_t n = 0;
    Matrix W_enc;
    Vector b_enc;
    Matrix W_dec;
    Vector b_dec;
    Matrix W_gate;
    Vector b_gate;
    Matrix W_mag;
    Vector b_mag;

    bool has_gate() const { return W_gate.size() > 0; }
    /// Same shapes, all zero.
    SaeParams zeros_like() const;
    /// Flat views over every parameter block in checkpoint order.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    bool all_finite() const;
};

using ParamGrads = SaeParams;

struct LossBreakdown {
    double total = 0.0;
    double reconstruction = 0.0;  // batch mean of ||x - x_hat||^2
    double sparsity = 0.0;        // lambda-weighted L1 term as it enters total
    double auxiliary = 0.0;       // gated frozen-decoder term
    double mean_l1 = 0.0;         // unweighted batch-mean ||z||_1, for reporting
};

SaeParams init_params(const SaeArchitecture& arch, std::size_t d, std::size_t expansion, std::uint64_t seed,
                      const std::optional<Vector>& data_mean = std::nullopt);

/// Keeps the k largest entries (ties toward the lower index) and zeroes the rest.
std::vector<double> topk_select(std::span<const double> v, std::size_t k);
/// Indices kept by topk_select, ascending.
std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k);

/// Encoder pre-activations with no nonlinearity or TopK mask: W_enc x + b_enc for
/// relu; W_enc x (plus b_enc when topk_use_bias) for topk; the magnitude path
/// W_mag (x - b_dec) + b_mag for gated.
Matrix pre_activations(const SaeParams& params, const SaeArchitecture& arch, const Matrix& x);

Matrix encode(const SaeParams& params, const SaeArchitecture& arch, const Matrix& x);
Vector encode(const SaeParams& params, const SaeArchitecture& arch, const Vector& x);
Matrix decode(const SaeParams& params, const Matrix& z);
Vector decode(const SaeParams& params, const Vector& z);

LossBreakdown loss(const SaeParams& params, const SaeArchitecture& arch, const Matrix& batch, double lambda_effective);

struct LossAndGrads {
    LossBreakdown loss;
    ParamGrads grads;
    Matrix latents;  // z for the batch, kept for dead-latent tracking
};

/// Analytic gradients of loss().total. ReLU'(0) = 0; TopK mask and the gated
/// Heaviside are constants. The gated auxiliary term decodes through a frozen
/// copy of W_dec/b_dec, so it contributes no gradient to those blocks.
LossAndGrads grad(const SaeParams& params, const SaeArchitecture& arch, const Matrix& batch, double lambda_effective);

/// Rescales every W_dec column to unit L2 norm. Throws on a zero column.
void normalize_decoder(SaeParams& params);

// SAEPRM01 checkpoint.
inline constexpr char kCheckpointMagic[] = "SAEPRM01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    SaeParams params;
    SaeArchitecture arch;
};

void save_checkpoint(const std::filesystem::path& path, const SaeParams& params, const SaeArchitecture& arch);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the f32 image of every block; stable across runs.
std::uint64_t params_checksum(const SaeParams& params);

}  // namespace saelab
