#include "saelab/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/core.h>

#include "json_util.hpp"
#include "saelab/binary_io.hpp"
#include "saelab/errors.hpp"
#include "saelab/trainer.hpp"

namespace saelab {

std::string_view to_string(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::Raw:
            return "raw";
        case FeatureMode::Latent:
            return "latent";
        case FeatureMode::PreActivation:
            return "pre_activation";
    }
    return "unknown";
}

FeatureMode parse_feature_mode(std::string_view name) {
    if (name == "raw") return FeatureMode::Raw;
    if (name == "latent") return FeatureMode::Latent;
    if (name == "pre_activation") return FeatureMode::PreActivation;
    throw InvalidArgument(fmt::format("unknown feature mode '{}' (expected raw, latent or pre_activation)", name));
}

Matrix featurize(const SaeParams& params, const SaeArchitecture& arch, const DatasetView& view, FeatureMode mode) {
    Matrix x = view.rows();
    switch (mode) {
        case FeatureMode::Raw:
            return x;
        case FeatureMode::Latent:
            return encode(params, arch, x);
        case FeatureMode::PreActivation:
            return pre_activations(params, arch, x);
    }
    throw InvalidArgument("invalid feature mode");
}

nlohmann::json ProbeConfig::to_json() const {
    return {{"lr", lr}, {"batch_size", batch_size}, {"epochs", epochs}, {"seed", seed}};
}

ProbeConfig ProbeConfig::from_json(const nlohmann::json& j) {
    constexpr std::string_view where = "probe";
    detail::reject_unknown_keys(j, {"lr", "batch_size", "epochs", "seed"}, where);
    ProbeConfig c;
    detail::read_field(j, "lr", c.lr, where);
    detail::read_field(j, "batch_size", c.batch_size, where);
    detail::read_field(j, "epochs", c.epochs, where);
    detail::read_field(j, "seed", c.seed, where);
    return c;
}

Matrix LinearProbe::logits(const Matrix& features) const {
    if (static_cast<std::size_t>(features.cols()) != feat_dim()) {
        throw InvalidArgument(fmt::format("features have width {}, probe expects {}", features.cols(), feat_dim()));
    }
    return (features * W.transpose()).rowwise() + b.transpose();
}

std::vector<std::uint32_t> LinearProbe::predict(const Matrix& features) const {
    const Matrix z = logits(features);
    std::vector<std::uint32_t> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c) {
            if (z(r, c) > z(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

namespace {

void check_labels(const Matrix& features, const std::vector<std::uint32_t>& labels, std::size_t n_classes) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw InvalidArgument(
            fmt::format("feature rows ({}) and labels ({}) disagree", features.rows(), labels.size()));
    }
    for (auto l : labels) {
        if (l >= n_classes) throw InvalidArgument(fmt::format("label {} outside [0, {})", l, n_classes));
    }
    if (!features.allFinite()) throw InvalidArgument("features contain non-finite values");
}

// Row-wise softmax cross-entropy; writes d(mean loss)/d(logits) into `grad`.
double softmax_xent(const Matrix& logits, std::span<const std::uint32_t> labels, Matrix& grad) {
    grad.resize(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const RowVector e = (logits.row(r).array() - mx).exp().matrix();
        const double s = e.sum();
        const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
        total += -(logits(r, y) - mx - std::log(s));
        grad.row(r) = e / s;
        grad(r, y) -= 1.0;
    }
    grad *= inv_b;
    return total * inv_b;
}

}  // namespace

ProbeFit fit_probe(const Matrix& features, const std::vector<std::uint32_t>& labels, std::size_t n_classes,
                   const ProbeConfig& cfg) {
    if (n_classes < 2) throw InvalidArgument("fit_probe needs at least 2 classes");
    if (features.rows() == 0) throw InvalidArgument("fit_probe: no samples");
    check_labels(features, labels, n_classes);
    if (std::set<std::uint32_t>(labels.begin(), labels.end()).size() < 2) {
        throw InvalidArgument("fit_probe: training labels contain a single class");
    }
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw InvalidArgument("probe batch_size and epochs must be ≥ 1");

    const auto c = static_cast<Eigen::Index>(n_classes);
    ProbeFit fit;
    LinearProbe& probe = fit.probe;
    probe.W = Matrix::Zero(c, features.cols());
    probe.b = Vector::Zero(c);
    probe.config = cfg;
    Matrix mW = Matrix::Zero(c, features.cols()), vW = mW;
    Vector mb = Vector::Zero(c), vb = mb;
    const TrainConfig adam_cfg;  // beta1/beta2/eps defaults
    std::uint64_t t = 0;

    const std::size_t n = labels.size();
    Matrix xb, grad_logits;
    std::vector<std::uint32_t> yb;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = permutation(n, cfg.seed + epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            xb.resize(static_cast<Eigen::Index>(end - start), features.cols());
            yb.resize(end - start);
            for (std::size_t i = start; i < end; ++i) {
                xb.row(static_cast<Eigen::Index>(i - start)) = features.row(static_cast<Eigen::Index>(order[i]));
                yb[i - start] = labels[order[i]];
            }
            const double l = softmax_xent(probe.logits(xb), yb, grad_logits);
            epoch_loss += l * static_cast<double>(end - start);
            Matrix gW = grad_logits.transpose() * xb;
            Vector gb = grad_logits.colwise().sum().transpose();
            ++t;
            adam_update({probe.W.data(), static_cast<std::size_t>(probe.W.size())},
                        {gW.data(), static_cast<std::size_t>(gW.size())}, {mW.data(), static_cast<std::size_t>(mW.size())},
                        {vW.data(), static_cast<std::size_t>(vW.size())}, t, cfg.lr, adam_cfg.beta1, adam_cfg.beta2,
                        adam_cfg.eps);
            adam_update({probe.b.data(), static_cast<std::size_t>(probe.b.size())},
                        {gb.data(), static_cast<std::size_t>(gb.size())}, {mb.data(), static_cast<std::size_t>(mb.size())},
                        {vb.data(), static_cast<std::size_t>(vb.size())}, t, cfg.lr, adam_cfg.beta1, adam_cfg.beta2,
                        adam_cfg.eps);
        }
        fit.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    }
    return fit;
}

double eval_probe(const LinearProbe& probe, const Matrix& features, const std::vector<std::uint32_t>& labels) {
    check_labels(features, labels, std::numeric_limits<std::uint32_t>::max());
    if (labels.empty()) throw InvalidArgument("eval_probe: no samples");
    const auto pred = probe.predict(features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

ProbeReport domain_shift_eval(const LinearProbe& probe, const std::vector<LabeledFeatures>& datasets) {
    for (const auto& ds : datasets) {
        if (ds.n_classes != probe.n_classes()) {
            throw InvalidArgument(fmt::format("dataset '{}' has {} classes, probe was fit on {}", ds.tag, ds.n_classes,
                                              probe.n_classes()));
        }
    }
    ProbeReport rep;
    for (const auto& ds : datasets) rep.accuracies.emplace_back(ds.tag, eval_probe(probe, ds.features, ds.labels));
    return rep;
}

void write_probe_csv(const std::filesystem::path& path, FeatureMode mode, const ProbeReport& report, bool header) {
    std::ofstream out(path, header ? std::ios::trunc : std::ios::app);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    if (header) out << "feature_mode,dataset_tag,accuracy\n";
    for (const auto& [tag, acc] : report.accuracies) out << fmt::format("{},{},{}\n", to_string(mode), tag, acc);
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

void save_probe(const std::filesystem::path& path, const LinearProbe& probe) {
    io::ByteWriter w;
    w.magic(std::string_view(kProbeMagic, 8));
    w.u32(kProbeVersion);
    w.u8(static_cast<std::uint8_t>(probe.feature_mode));
    w.u32(static_cast<std::uint32_t>(probe.n_classes()));
    w.u32(static_cast<std::uint32_t>(probe.feat_dim()));
    w.f32_block({probe.W.data(), static_cast<std::size_t>(probe.W.size())}, "W");
    w.f32_block({probe.b.data(), static_cast<std::size_t>(probe.b.size())}, "b");
    w.write_file(path);
}

LinearProbe load_probe(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kProbeMagic, 8) != 0) {
        throw FormatError(FormatErrc::UnrecognizedFormat,
                          fmt::format("unrecognized format: '{}' is not an SAEPRB01 probe", path.string()));
    }
    io::ByteReader r(bytes.data(), bytes.size());
    r.string(8);
    if (const auto v = r.u32(); v != kProbeVersion) {
        throw FormatError(FormatErrc::UnsupportedVersion, fmt::format("unsupported probe version {}", v));
    }
    LinearProbe p;
    const auto mode = r.u8();
    if (mode > 2) throw FormatError(FormatErrc::BadHeader, "unknown probe feature mode");
    p.feature_mode = static_cast<FeatureMode>(mode);
    const auto classes = static_cast<Eigen::Index>(r.u32());
    const auto dim = static_cast<Eigen::Index>(r.u32());
    p.W.resize(classes, dim);
    p.b.resize(classes);
    r.f32_block({p.W.data(), static_cast<std::size_t>(p.W.size())});
    r.f32_block({p.b.data(), static_cast<std::size_t>(p.b.size())});
    if (r.remaining() != 0) throw FormatError(FormatErrc::TrailingBytes, "trailing bytes in probe file");
    return p;
}

}  // namespace saelab
