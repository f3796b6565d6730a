#include "saelab/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "json_util.hpp"
#include "saelab/errors.hpp"

namespace saelab {

namespace {

void require_fraction(double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) throw InvalidArgument(fmt::format("{} must be in [0, 1), got {}", name, v));
}

std::size_t ramp_steps(double frac, std::size_t total) {
    // Guard against 0.05 * 60 = 3.0000000000000004 style rounding.
    const double raw = frac * static_cast<double>(total);
    return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be ≥ 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be ≥ 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument(fmt::format("lr must be ≥ 0, got {}", lr));
    require_fraction(lr_warmup_frac, "lr_warmup_frac");
    require_fraction(lr_decay_frac, "lr_decay_frac");
    require_fraction(lambda_warmup_frac, "lambda_warmup_frac");
    if (!(lr_warmup_frac + lr_decay_frac < 1.0)) {
        throw InvalidArgument("lr_warmup_frac + lr_decay_frac must be < 1");
    }
    require_fraction(beta1, "beta1");
    require_fraction(beta2, "beta2");
    if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
    if (dead_window < 1) throw InvalidArgument("dead_window must be ≥ 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must be in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"lr_warmup_frac", lr_warmup_frac},
            {"lr_decay_frac", lr_decay_frac},
            {"lambda_warmup_frac", lambda_warmup_frac},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"seed", seed},
            {"dead_window", dead_window},
            {"eval_every", eval_every},
            {"val_fraction", val_fraction},
            {"prefetch", prefetch},
            {"init_b_dec_to_mean", init_b_dec_to_mean}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    constexpr std::string_view where = "train";
    detail::reject_unknown_keys(j,
                                {"epochs", "batch_size", "lr", "lr_warmup_frac", "lr_decay_frac", "lambda_warmup_frac",
                                 "beta1", "beta2", "eps", "seed", "dead_window", "eval_every", "val_fraction",
                                 "prefetch", "init_b_dec_to_mean"},
                                where);
    TrainConfig c;
    detail::read_field(j, "epochs", c.epochs, where);
    detail::read_field(j, "batch_size", c.batch_size, where);
    detail::read_field(j, "lr", c.lr, where);
    detail::read_field(j, "lr_warmup_frac", c.lr_warmup_frac, where);
    detail::read_field(j, "lr_decay_frac", c.lr_decay_frac, where);
    detail::read_field(j, "lambda_warmup_frac", c.lambda_warmup_frac, where);
    detail::read_field(j, "beta1", c.beta1, where);
    detail::read_field(j, "beta2", c.beta2, where);
    detail::read_field(j, "eps", c.eps, where);
    detail::read_field(j, "seed", c.seed, where);
    detail::read_field(j, "dead_window", c.dead_window, where);
    detail::read_field(j, "eval_every", c.eval_every, where);
    detail::read_field(j, "val_fraction", c.val_fraction, where);
    detail::read_field(j, "prefetch", c.prefetch, where);
    detail::read_field(j, "init_b_dec_to_mean", c.init_b_dec_to_mean, where);
    return c;
}

double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    if (total_steps == 0) throw InvalidArgument("total_steps must be ≥ 1");
    step = std::min(step, total_steps);
    const std::size_t warm = ramp_steps(cfg.lr_warmup_frac, total_steps);
    const std::size_t decay = ramp_steps(cfg.lr_decay_frac, total_steps);
    double m = 1.0;
    if (warm > 0) m = std::min(m, static_cast<double>(step) / static_cast<double>(warm));
    if (decay > 0) m = std::min(m, static_cast<double>(total_steps - step) / static_cast<double>(decay));
    return std::clamp(m, 0.0, 1.0);
}

double lambda_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    if (total_steps == 0) throw InvalidArgument("total_steps must be ≥ 1");
    const std::size_t warm = ramp_steps(cfg.lambda_warmup_frac, total_steps);
    if (warm == 0) return 1.0;
    return std::min(1.0, static_cast<double>(step) / static_cast<double>(warm));
}

bool adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    bool moved = false;
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        const double update = lr * m_hat / (std::sqrt(v_hat) + eps);
        if (update != 0.0) {
            param[i] -= update;
            moved = true;
        }
    }
    return moved;
}

AdamState AdamState::for_params(const SaeParams& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(SaeParams& params, const ParamGrads& grads, AdamState& state, double lr_t, const TrainConfig& cfg,
               const SaeArchitecture& arch) {
    if (!(lr_t >= 0.0)) throw InvalidArgument("lr_t must be ≥ 0");
    auto p = params.blocks();
    const auto g = grads.blocks();
    auto m = state.m.blocks();
    auto v = state.v.blocks();
    if (p.size() != g.size() || p.size() != m.size()) throw InvalidArgument("adam_step: block layout mismatch");
    for (std::size_t b = 0; b < p.size(); ++b) {
        if (p[b].size() != g[b].size()) throw InvalidArgument("adam_step: gradient shape mismatch");
    }
    ++state.t;
    bool decoder_moved = false;
    for (std::size_t b = 0; b < p.size(); ++b) {
        const bool moved = adam_update(p[b], g[b], m[b], v[b], state.t, lr_t, cfg.beta1, cfg.beta2, cfg.eps);
        if (b == 2) decoder_moved = moved;  // W_dec
    }
    if (arch.kind != SaeKind::TopK && decoder_moved) normalize_decoder(params);
}

DeadNeuronTracker::DeadNeuronTracker(std::size_t n_latents, std::size_t window)
    : last_fired_(n_latents, std::numeric_limits<std::int64_t>::min()), window_(window) {
    if (window_ < 1) throw InvalidArgument("dead-neuron window must be ≥ 1");
}

void DeadNeuronTracker::observe(const Matrix& z) {
    if (static_cast<std::size_t>(z.cols()) != last_fired_.size()) {
        throw InvalidArgument(fmt::format("activation width {} != tracked latents {}", z.cols(), last_fired_.size()));
    }
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        if ((z.col(c).array() > 0.0).any()) last_fired_[static_cast<std::size_t>(c)] = step_;
    }
    ++step_;
}

bool DeadNeuronTracker::is_dead(std::size_t i) const {
    const std::int64_t last = last_fired_[i];
    if (last == std::numeric_limits<std::int64_t>::min()) return true;
    // Window covers steps (step_ - window, step_ - 1].
    return last < step_ - static_cast<std::int64_t>(window_);
}

double DeadNeuronTracker::dead_fraction() const {
    if (step_ == 0 || last_fired_.empty()) return 0.0;
    return static_cast<double>(dead_latents().size()) / static_cast<double>(last_fired_.size());
}

std::vector<std::size_t> DeadNeuronTracker::dead_latents() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < last_fired_.size(); ++i) {
        if (is_dead(i)) out.push_back(i);
    }
    return out;
}

std::vector<double> track_dead_neurons(std::span<const Matrix> activation_stream, std::size_t n_latents,
                                       std::size_t window) {
    DeadNeuronTracker tracker(n_latents, window);
    std::vector<double> out;
    out.reserve(activation_stream.size());
    for (const auto& z : activation_stream) {
        tracker.observe(z);
        out.push_back(tracker.dead_fraction());
    }
    return out;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << "step,lr,lambda_effective,loss_total,loss_reconstruction,loss_sparsity,loss_auxiliary,"
           "smoothed_loss,val_mse,val_l0,val_l1,dead_frac\n";
    for (const auto& r : records) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.step, r.lr, r.lambda_effective,
                           r.train_loss.total, r.train_loss.reconstruction, r.train_loss.sparsity,
                           r.train_loss.auxiliary, r.smoothed_train_loss, r.val_mse, r.val_l0, r.val_l1,
                           r.dead_fraction);
    }
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

TrainResult train(const DatasetView& data, const SaeArchitecture& arch, std::size_t expansion, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw InvalidArgument("training data is empty");
    const auto started = std::chrono::steady_clock::now();

    auto [train_view, val_view] = split(data, cfg.val_fraction, cfg.seed);
    TrainReport report;
    if (val_view.size() == 0) {
        val_view = train_view;
        report.val_on_train = true;
    }
    if (train_view.size() == 0) throw InvalidArgument("training split is empty");

    std::optional<Vector> mean;
    if (cfg.init_b_dec_to_mean) {
        if (train_view.size() >= 2) {
            mean = dataset_stats(train_view).mean;
        } else {
            mean = train_view.rows().row(0).transpose();
        }
    }
    TrainResult result{init_params(arch, data.dim(), expansion, cfg.seed, mean), {}};
    SaeParams& params = result.params;
    AdamState adam = AdamState::for_params(params);
    DeadNeuronTracker dead(params.n, cfg.dead_window);

    const std::size_t per_epoch = (train_view.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = cfg.epochs * per_epoch;
    report.total_steps = total;
    report.tie_gate_weights = arch.tie_gate_weights;
    report.topk_use_bias = arch.topk_use_bias;

    std::deque<double> recent;
    double recent_sum = 0.0;
    std::size_t step = 0;

    auto record = [&](const LossBreakdown& last_loss, double lr_t, double lambda_t) {
        const MetricsReport val = dataset_eval(params, arch, val_view, "val");
        TrainRecord r;
        r.step = step;
        r.lr = lr_t;
        r.lambda_effective = lambda_t;
        r.train_loss = last_loss;
        r.smoothed_train_loss = recent.empty() ? 0.0 : recent_sum / static_cast<double>(recent.size());
        r.val_mse = val.mean_mse;
        r.val_l0 = val.mean_l0;
        r.val_l1 = val.mean_l1;
        r.dead_fraction = dead.dead_fraction();
        report.records.push_back(r);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchStream stream(train_view, cfg.batch_size, mix_seed(cfg.seed, epoch));
        std::optional<PrefetchingBatchStream> prefetch;
        if (cfg.prefetch > 0) prefetch.emplace(std::move(stream), cfg.prefetch);
        for (;;) {
            std::optional<Batch> batch = prefetch ? prefetch->next() : stream.next();
            if (!batch) break;
            const double lr_t = cfg.lr * lr_schedule(step, total, cfg);
            const double lambda_t = arch.uses_l1() ? arch.lambda * lambda_schedule(step, total, cfg) : 0.0;
            LossAndGrads lg = grad(params, arch, batch->rows, lambda_t);
            if (!std::isfinite(lg.loss.total)) throw DivergenceError(static_cast<long long>(step));
            dead.observe(lg.latents);
            adam_step(params, lg.grads, adam, lr_t, cfg, arch);
            ++step;

            recent.push_back(lg.loss.total);
            recent_sum += lg.loss.total;
            if (recent.size() > 100) {
                recent_sum -= recent.front();
                recent.pop_front();
            }
            const bool last = step == total;
            if (last || (cfg.eval_every > 0 && step % cfg.eval_every == 0)) {
                if (!params.all_finite()) throw DivergenceError(static_cast<long long>(step));
                record(lg.loss, lr_t, lambda_t);
            }
        }
    }
    if (!params.all_finite()) throw DivergenceError(static_cast<long long>(step));
    report.checksum = params_checksum(params);
    report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.report = std::move(report);
    return result;
}

void SweepGrid::validate() const {
    if (architectures.empty()) throw InvalidArgument("sweep grid: architectures list is empty");
    if (expansions.empty()) throw InvalidArgument("sweep grid: expansions list is empty");
    const bool wants_lambda = std::any_of(architectures.begin(), architectures.end(),
                                          [](SaeKind k) { return k != SaeKind::TopK; });
    const bool wants_k = std::any_of(architectures.begin(), architectures.end(),
                                     [](SaeKind k) { return k == SaeKind::TopK; });
    if (wants_lambda && lambdas.empty()) throw InvalidArgument("sweep grid: lambdas list is empty");
    if (wants_k && ks.empty()) throw InvalidArgument("sweep grid: ks list is empty");
    for (double l : lambdas) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument(fmt::format("sweep grid: lambda {} must be finite and >= 0", l));
    }
    for (auto k : ks) {
        if (k == 0) throw InvalidArgument("sweep grid: k must be positive");
    }
    for (auto e : expansions) {
        if (e == 0) throw InvalidArgument("sweep grid: expansion must be positive");
    }
}

std::size_t SweepGrid::size() const {
    std::size_t count = 0;
    for (SaeKind kind : architectures) count += (kind == SaeKind::TopK ? ks.size() : lambdas.size());
    return count * expansions.size();
}

nlohmann::json SweepGrid::to_json() const {
    std::vector<std::string> archs;
    for (auto k : architectures) archs.emplace_back(to_string(k));
    return {{"lambdas", lambdas},           {"ks", ks},
            {"expansions", expansions},     {"architectures", archs},
            {"topk_use_bias", topk_use_bias}, {"tie_gate_weights", tie_gate_weights}};
}

SweepGrid SweepGrid::from_json(const nlohmann::json& j) {
    constexpr std::string_view where = "grid";
    detail::reject_unknown_keys(j, {"lambdas", "ks", "expansions", "architectures", "topk_use_bias", "tie_gate_weights"},
                                where);
    SweepGrid g;
    detail::read_field(j, "lambdas", g.lambdas, where);
    detail::read_field(j, "ks", g.ks, where);
    detail::read_field(j, "expansions", g.expansions, where);
    if (j.contains("architectures")) {
        std::vector<std::string> names;
        detail::read_field(j, "architectures", names, where);
        g.architectures.clear();
        for (const auto& n : names) {
            try {
                g.architectures.push_back(parse_sae_kind(n));
            } catch (const InvalidArgument& e) {
                throw ConfigError(fmt::format("grid.architectures: {}", e.what()));
            }
        }
    }
    detail::read_field(j, "topk_use_bias", g.topk_use_bias, where);
    detail::read_field(j, "tie_gate_weights", g.tie_gate_weights, where);
    return g;
}

namespace {

struct GridPoint {
    SaeArchitecture arch;
    std::size_t expansion;
};

std::vector<GridPoint> enumerate(const SweepGrid& grid) {
    std::vector<GridPoint> out;
    for (SaeKind kind : grid.architectures) {
        for (std::size_t e : grid.expansions) {
            if (kind == SaeKind::TopK) {
                for (auto k : grid.ks) {
                    SaeArchitecture a = SaeArchitecture::topk(k);
                    a.topk_use_bias = grid.topk_use_bias;
                    out.push_back({a, e});
                }
            } else {
                for (double l : grid.lambdas) {
                    SaeArchitecture a{kind, l, 0, false, grid.tie_gate_weights};
                    out.push_back({a, e});
                }
            }
        }
    }
    return out;
}

SweepRow run_point(const DatasetView& data, const GridPoint& pt, const TrainConfig& cfg, const SweepOptions& opts) {
    SweepRow row;
    row.arch = std::string(to_string(pt.arch.kind));
    row.sparsity_kind = pt.arch.kind == SaeKind::TopK ? "k" : "lambda";
    row.sparsity_value = pt.arch.kind == SaeKind::TopK ? static_cast<double>(pt.arch.k) : pt.arch.lambda;
    row.expansion = pt.expansion;
    row.seed = cfg.seed;
    const auto started = std::chrono::steady_clock::now();
    try {
        TrainResult res = train(data, pt.arch, pt.expansion, cfg);
        const TrainRecord& last = res.report.records.back();
        row.final_val_mse = last.val_mse;
        row.final_val_l0 = last.val_l0;
        row.final_val_l1 = last.val_l1;
        row.dead_frac = last.dead_fraction;
        row.steps = res.report.total_steps;
        if (opts.checkpoint_dir) {
            const auto path = *opts.checkpoint_dir / fmt::format("{}_{}{}_x{}.saeprm", row.arch, row.sparsity_kind,
                                                                 row.sparsity_value, row.expansion);
            save_checkpoint(path, res.params, pt.arch);
            row.checkpoint_path = path.filename().string();
        }
    } catch (const std::exception& e) {
        row.status = fmt::format("failed: {}", e.what());
        std::replace(row.status.begin(), row.status.end(), ',', ';');
    }
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return row;
}

}  // namespace

std::vector<SweepRow> sweep(const DatasetView& data, const SweepGrid& grid, const TrainConfig& cfg,
                            const SweepOptions& opts) {
    grid.validate();
    cfg.validate();
    const auto points = enumerate(grid);
    std::vector<SweepRow> rows(points.size());
    const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, points.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < points.size(); ++i) rows[i] = run_point(data, points[i], cfg, opts);
        return rows;
    }
    // Runs share only the read-only dataset; each writes its own row slot.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < points.size(); i = next++) rows[i] = run_point(data, points[i], cfg, opts);
        });
    }
    for (auto& th : pool) th.join();
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << "arch,sparsity_kind,sparsity_value,expansion,seed,final_val_mse,final_val_l0,final_val_l1,dead_frac,"
           "steps,wall_s,status,checkpoint_path\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{:.3f},{},{}\n", r.arch, r.sparsity_kind, r.sparsity_value,
                           r.expansion, r.seed, r.final_val_mse, r.final_val_l0, r.final_val_l1, r.dead_frac, r.steps,
                           r.wall_s, r.status, r.checkpoint_path);
    }
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace saelab
