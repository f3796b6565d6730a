#include "saelab/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab {

std::string_view to_string(SaeKind kind) {
    switch (kind) {
        case SaeKind::Relu:
            return "relu";
        case SaeKind::TopK:
            return "topk";
        case SaeKind::Gated:
            return "gated";
    }
    return "unknown";
}

SaeKind parse_sae_kind(std::string_view name) {
    if (name == "relu") return SaeKind::Relu;
    if (name == "topk") return SaeKind::TopK;
    if (name == "gated") return SaeKind::Gated;
    throw InvalidArgument(fmt::format("unknown SAE architecture '{}' (expected relu, topk or gated)", name));
}

void SaeArchitecture::validate(std::size_t n_latents) const {
    if (kind == SaeKind::TopK) {
        if (k < 1 || k > n_latents) {
            throw InvalidArgument(fmt::format("topk k must satisfy 1 <= k <= n = {}, got {}", n_latents, k));
        }
    } else if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument(fmt::format("lambda must be a finite value >= 0, got {}", lambda));
    }
}

SaeParams SaeParams::zeros_like() const {
    SaeParams z;
    z.d = d;
    z.n = n;
    z.W_enc = Matrix::Zero(W_enc.rows(), W_enc.cols());
    z.b_enc = Vector::Zero(b_enc.size());
    z.W_dec = Matrix::Zero(W_dec.rows(), W_dec.cols());
    z.b_dec = Vector::Zero(b_dec.size());
    z.W_gate = Matrix::Zero(W_gate.rows(), W_gate.cols());
    z.b_gate = Vector::Zero(b_gate.size());
    z.W_mag = Matrix::Zero(W_mag.rows(), W_mag.cols());
    z.b_mag = Vector::Zero(b_mag.size());
    return z;
}

namespace {

template <typename M>
std::span<double> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename M>
std::span<const double> cspan_of(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

std::vector<std::span<double>> SaeParams::blocks() {
    std::vector<std::span<double>> out{span_of(W_enc), span_of(b_enc), span_of(W_dec), span_of(b_dec)};
    if (has_gate()) {
        out.insert(out.end(), {span_of(W_gate), span_of(b_gate), span_of(W_mag), span_of(b_mag)});
    }
    return out;
}

std::vector<std::span<const double>> SaeParams::blocks() const {
    std::vector<std::span<const double>> out{cspan_of(W_enc), cspan_of(b_enc), cspan_of(W_dec), cspan_of(b_dec)};
    if (has_gate()) {
        out.insert(out.end(), {cspan_of(W_gate), cspan_of(b_gate), cspan_of(W_mag), cspan_of(b_mag)});
    }
    return out;
}

bool SaeParams::all_finite() const {
    for (auto block : blocks()) {
        for (double v : block) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

SaeParams init_params(const SaeArchitecture& arch, std::size_t d, std::size_t expansion, std::uint64_t seed,
                      const std::optional<Vector>& data_mean) {
    if (d == 0) throw InvalidArgument("d must be ≥ 1");
    if (expansion == 0) throw InvalidArgument("expansion must be ≥ 1");
    const std::size_t n = d * expansion;
    arch.validate(n);
    if (data_mean && static_cast<std::size_t>(data_mean->size()) != d) {
        throw InvalidArgument(fmt::format("data_mean has length {}, expected {}", data_mean->size(), d));
    }

    const auto di = static_cast<Eigen::Index>(d);
    const auto ni = static_cast<Eigen::Index>(n);
    SaeParams p;
    p.d = d;
    p.n = n;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    p.W_enc.resize(ni, di);
    for (Eigen::Index i = 0; i < p.W_enc.size(); ++i) p.W_enc.data()[i] = uniform(rng);
    p.b_enc = Vector::Zero(ni);
    p.W_dec = p.W_enc.transpose();
    normalize_decoder(p);
    p.b_dec = data_mean ? *data_mean : Vector::Zero(di);
    if (arch.kind == SaeKind::Gated) {
        p.W_gate = p.W_enc;
        p.b_gate = Vector::Zero(ni);
        p.W_mag = p.W_enc;
        p.b_mag = Vector::Zero(ni);
    }
    return p;
}

std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k) {
    if (k < 1 || k > v.size()) {
        throw InvalidArgument(fmt::format("k must satisfy 1 <= k <= {}, got {}", v.size(), k));
    }
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto larger = [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    if (k < v.size()) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), larger);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> topk_select(std::span<const double> v, std::size_t k) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i : topk_indices(v, k)) out[i] = v[i];
    return out;
}

namespace {

void check_input(const SaeParams& p, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != p.d) {
        throw InvalidArgument(fmt::format("input has dim {}, SAE expects {}", x.cols(), p.d));
    }
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

// Everything grad() needs from one forward pass.
struct Forward {
    Matrix pre;      // relu/topk encoder pre-activations, gated magnitude pre-activations
    Matrix z;
    Matrix mask;     // d z / d pre (0/1)
    Matrix xhat;
    Matrix centered; // gated: x - b_dec
    Matrix gate_pre; // gated
};

Matrix topk_rows(const Matrix& pre, std::size_t k, bool apply_relu, Matrix& mask) {
    Matrix z = Matrix::Zero(pre.rows(), pre.cols());
    mask = Matrix::Zero(pre.rows(), pre.cols());
    for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        std::span<const double> row(pre.data() + r * pre.cols(), static_cast<std::size_t>(pre.cols()));
        for (std::size_t i : topk_indices(row, k)) {
            const auto c = static_cast<Eigen::Index>(i);
            const double v = pre(r, c);
            if (apply_relu && !(v > 0.0)) continue;
            z(r, c) = v;
            mask(r, c) = 1.0;
        }
    }
    return z;
}

Forward forward(const SaeParams& p, const SaeArchitecture& arch, const Matrix& x) {
    check_input(p, x);
    arch.validate(p.n);
    Forward f;
    switch (arch.kind) {
        case SaeKind::Relu: {
            f.pre = (x * p.W_enc.transpose()).rowwise() + p.b_enc.transpose();
            f.mask = (f.pre.array() > 0.0).cast<double>();
            f.z = f.pre.cwiseProduct(f.mask);
            break;
        }
        case SaeKind::TopK: {
            f.pre = x * p.W_enc.transpose();
            if (arch.topk_use_bias) f.pre.rowwise() += p.b_enc.transpose();
            f.z = topk_rows(f.pre, arch.k, arch.topk_use_bias, f.mask);
            break;
        }
        case SaeKind::Gated: {
            if (!p.has_gate()) throw InvalidArgument("gated architecture requires gate parameters");
            f.centered = x.rowwise() - p.b_dec.transpose();
            f.gate_pre = (f.centered * p.W_gate.transpose()).rowwise() + p.b_gate.transpose();
            f.pre = (f.centered * p.W_mag.transpose()).rowwise() + p.b_mag.transpose();
            const Matrix gate = (f.gate_pre.array() > 0.0).cast<double>();
            const Matrix mag_active = (f.pre.array() > 0.0).cast<double>();
            f.mask = gate.cwiseProduct(mag_active);
            f.z = f.pre.cwiseProduct(f.mask);
            break;
        }
    }
    f.xhat = (f.z * p.W_dec.transpose()).rowwise() + p.b_dec.transpose();
    return f;
}

}  // namespace

Matrix pre_activations(const SaeParams& params, const SaeArchitecture& arch, const Matrix& x) {
    check_input(params, x);
    switch (arch.kind) {
        case SaeKind::Relu:
            return (x * params.W_enc.transpose()).rowwise() + params.b_enc.transpose();
        case SaeKind::TopK: {
            Matrix pre = x * params.W_enc.transpose();
            if (arch.topk_use_bias) pre.rowwise() += params.b_enc.transpose();
            return pre;
        }
        case SaeKind::Gated: {
            const Matrix centered = x.rowwise() - params.b_dec.transpose();
            return (centered * params.W_mag.transpose()).rowwise() + params.b_mag.transpose();
        }
    }
    return {};
}

Matrix encode(const SaeParams& params, const SaeArchitecture& arch, const Matrix& x) {
    return forward(params, arch, x).z;
}

Vector encode(const SaeParams& params, const SaeArchitecture& arch, const Vector& x) {
    const Matrix row = x.transpose();
    return encode(params, arch, row).row(0).transpose();
}

Matrix decode(const SaeParams& params, const Matrix& z) {
    if (static_cast<std::size_t>(z.cols()) != params.n) {
        throw InvalidArgument(fmt::format("latent has dim {}, SAE expects {}", z.cols(), params.n));
    }
    return (z * params.W_dec.transpose()).rowwise() + params.b_dec.transpose();
}

Vector decode(const SaeParams& params, const Vector& z) {
    const Matrix row = z.transpose();
    return decode(params, row).row(0).transpose();
}

namespace {

LossBreakdown breakdown(const SaeParams& p, const SaeArchitecture& arch, const Matrix& x, const Forward& f,
                        double lambda, Matrix* gate_relu, Matrix* aux_residual) {
    const double inv_b = 1.0 / static_cast<double>(x.rows());
    LossBreakdown out;
    out.reconstruction = (f.xhat - x).squaredNorm() * inv_b;
    out.mean_l1 = f.z.cwiseAbs().sum() * inv_b;
    if (arch.kind == SaeKind::Gated) {
        Matrix rg = f.gate_pre.unaryExpr([](double v) { return relu(v); });
        Matrix ra = ((rg * p.W_dec.transpose()).rowwise() + p.b_dec.transpose()) - x;
        out.sparsity = lambda * rg.sum() * inv_b;
        out.auxiliary = ra.squaredNorm() * inv_b;
        if (gate_relu) *gate_relu = std::move(rg);
        if (aux_residual) *aux_residual = std::move(ra);
    } else if (arch.kind == SaeKind::Relu) {
        out.sparsity = lambda * out.mean_l1;
    }
    out.total = out.reconstruction + out.sparsity + out.auxiliary;
    return out;
}

void check_lambda(double lambda) {
    if (!(lambda >= 0.0)) throw InvalidArgument(fmt::format("lambda_effective must be >= 0, got {}", lambda));
}

}  // namespace

LossBreakdown loss(const SaeParams& params, const SaeArchitecture& arch, const Matrix& batch, double lambda_effective) {
    check_lambda(lambda_effective);
    const Forward f = forward(params, arch, batch);
    return breakdown(params, arch, batch, f, lambda_effective, nullptr, nullptr);
}

LossAndGrads grad(const SaeParams& params, const SaeArchitecture& arch, const Matrix& batch, double lambda_effective) {
    check_lambda(lambda_effective);
    const Forward f = forward(params, arch, batch);
    Matrix gate_relu;
    Matrix aux_residual;
    LossAndGrads out;
    out.loss = breakdown(params, arch, batch, f, lambda_effective, &gate_relu, &aux_residual);
    ParamGrads& g = out.grads;
    g = params.zeros_like();

    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    const Matrix g_xhat = (f.xhat - batch) * (2.0 * inv_b);
    g.W_dec = g_xhat.transpose() * f.z;
    g.b_dec = g_xhat.colwise().sum().transpose();

    Matrix g_z = g_xhat * params.W_dec;
    if (arch.kind == SaeKind::Relu && lambda_effective > 0.0) {
        // z >= 0 under relu; d|z|/dz = 1 where z > 0 and the mask zeroes the rest.
        g_z.array() += lambda_effective * inv_b;
    }
    const Matrix g_pre = g_z.cwiseProduct(f.mask);

    switch (arch.kind) {
        case SaeKind::Relu:
            g.W_enc = g_pre.transpose() * batch;
            g.b_enc = g_pre.colwise().sum().transpose();
            break;
        case SaeKind::TopK:
            g.W_enc = g_pre.transpose() * batch;
            if (arch.topk_use_bias) g.b_enc = g_pre.colwise().sum().transpose();
            break;
        case SaeKind::Gated: {
            g.W_mag = g_pre.transpose() * f.centered;
            g.b_mag = g_pre.colwise().sum().transpose();
            g.b_dec -= (g_pre * params.W_mag).colwise().sum().transpose();

            Matrix g_gate = aux_residual * (2.0 * inv_b) * params.W_dec;
            g_gate.array() += lambda_effective * inv_b;
            g_gate = g_gate.cwiseProduct((f.gate_pre.array() > 0.0).cast<double>().matrix());
            g.W_gate = g_gate.transpose() * f.centered;
            g.b_gate = g_gate.colwise().sum().transpose();
            g.b_dec -= (g_gate * params.W_gate).colwise().sum().transpose();

            if (arch.tie_gate_weights) {
                g.W_gate += g.W_mag;
                g.W_mag = g.W_gate;
            }
            break;
        }
    }
    out.latents = f.z;
    return out;
}

void normalize_decoder(SaeParams& params) {
    for (Eigen::Index c = 0; c < params.W_dec.cols(); ++c) {
        const double norm = params.W_dec.col(c).norm();
        if (!(norm > 0.0)) throw NumericalError(fmt::format("decoder column {} has zero norm", c));
        params.W_dec.col(c) /= norm;
    }
}

}  // namespace saelab
