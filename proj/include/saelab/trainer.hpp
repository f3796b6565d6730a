#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "saelab/activation_store.hpp"
#include "saelab/metrics.hpp"
#include "saelab/sae.hpp"

namespace saelab {

/// Training recipe. Defaults are three epochs of batch-64 Adam at 1e-4 with a
/// 5% linear warm-up, 20% linear decay, and a 5% lambda warm-up.
struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 64;
    double lr = 1e-4;
    double lr_warmup_frac = 0.05;
    double lr_decay_frac = 0.20;
    double lambda_warmup_frac = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t dead_window = 1000;
    std::size_t eval_every = 500;  // 0: evaluate only after the last step
    double val_fraction = 0.01;
    std::size_t prefetch = 0;      // batches queued by a producer thread; 0 disables
    bool init_b_dec_to_mean = true;

    void validate() const;
    nlohmann::json to_json() const;
    /// Rejects unknown keys; absent keys keep their defaults.
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Linear 0->1 over the first ceil(warmup*total) steps, 1 on the plateau, linear
/// 1->0 over the last ceil(decay*total) steps.
double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);
/// Linear 0->1 over the first ceil(lambda_warmup*total) steps, then 1.
double lambda_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

/// One bias-corrected Adam update on a flat block; `t` is the 1-based step.
/// Returns false when every update was exactly zero.
bool adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, double beta1, double beta2, double eps);

struct AdamState {
    SaeParams m;
    SaeParams v;
    std::uint64_t t = 0;

    static AdamState for_params(const SaeParams& params);
};

/// Adam over every block, then decoder re-normalization for relu and gated
/// SAEs when the decoder moved.
void adam_step(SaeParams& params, const ParamGrads& grads, AdamState& state, double lr_t, const TrainConfig& cfg,
               const SaeArchitecture& arch);

/// A latent is dead when it produced z > 0 on no sample during the trailing
/// `window` observed steps. Latents that never fired count as dead.
class DeadNeuronTracker {
public:
    DeadNeuronTracker(std::size_t n_latents, std::size_t window);
    void observe(const Matrix& z);
    double dead_fraction() const;
    std::vector<std::size_t> dead_latents() const;
    std::size_t steps_observed() const { return static_cast<std::size_t>(step_); }

private:
    bool is_dead(std::size_t i) const;

    std::vector<std::int64_t> last_fired_;
    std::size_t window_;
    std::int64_t step_ = 0;
};

/// Dead fraction after each matrix in the stream.
std::vector<double> track_dead_neurons(std::span<const Matrix> activation_stream, std::size_t n_latents,
                                       std::size_t window);

struct TrainRecord {
    std::size_t step = 0;  // optimizer steps completed
    double lr = 0.0;
    double lambda_effective = 0.0;
    LossBreakdown train_loss;
    double smoothed_train_loss = 0.0;  // mean total over the last 100 steps
    double val_mse = 0.0;
    double val_l0 = 0.0;
    double val_l1 = 0.0;
    double dead_fraction = 0.0;
};

struct TrainReport {
    std::vector<TrainRecord> records;
    std::uint64_t checksum = 0;
    double wall_s = 0.0;
    std::size_t total_steps = 0;
    bool val_on_train = false;  // val split rounded to zero rows
    std::string lambda_reduction = "batch_mean";
    bool tie_gate_weights = false;
    bool topk_use_bias = false;

    /// Per-record CSV; wall time is not part of it.
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
    SaeParams params;
    TrainReport report;
};

TrainResult train(const DatasetView& data, const SaeArchitecture& arch, std::size_t expansion, const TrainConfig& cfg);

struct SweepGrid {
    std::vector<double> lambdas{0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0};
    std::vector<std::uint32_t> ks{4, 8, 16, 32, 64, 128, 256};
    std::vector<std::size_t> expansions{8, 16, 32};
    std::vector<SaeKind> architectures{SaeKind::Relu, SaeKind::TopK, SaeKind::Gated};
    bool topk_use_bias = false;
    bool tie_gate_weights = false;

    void validate() const;
    std::size_t size() const;
    nlohmann::json to_json() const;
    static SweepGrid from_json(const nlohmann::json& j);
};

struct SweepRow {
    std::string arch;
    std::string sparsity_kind;  // "lambda" or "k"
    double sparsity_value = 0.0;
    std::size_t expansion = 0;
    std::uint64_t seed = 0;
    double final_val_mse = 0.0;
    double final_val_l0 = 0.0;
    double final_val_l1 = 0.0;
    double dead_frac = 0.0;
    std::size_t steps = 0;
    double wall_s = 0.0;
    std::string status = "ok";
    std::string checkpoint_path;
};

struct SweepOptions {
    std::size_t threads = 1;
    std::optional<std::filesystem::path> checkpoint_dir;
};

/// One run per grid point, rows in grid order. relu and gated pair with the
/// lambda list, topk with the k list. A failing run is recorded and skipped.
std::vector<SweepRow> sweep(const DatasetView& data, const SweepGrid& grid, const TrainConfig& cfg,
                            const SweepOptions& opts = {});

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace saelab
