#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "saelab/activation_store.hpp"
#include "saelab/sae.hpp"

namespace saelab {

enum class FeatureMode : std::uint8_t { Raw = 0, Latent = 1, PreActivation = 2 };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view name);

/// raw: rows unchanged; latent: encode(); pre_activation: encoder pre-activations
/// with no nonlinearity and no TopK mask.
Matrix featurize(const SaeParams& params, const SaeArchitecture& arch, const DatasetView& view, FeatureMode mode);

/// Probe hyper-parameters. The same values are used for every feature mode.
struct ProbeConfig {
    double lr = 1e-3;
    std::size_t batch_size = 256;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static ProbeConfig from_json(const nlohmann::json& j);
    bool operator==(const ProbeConfig&) const = default;
};

struct LinearProbe {
    Matrix W;  // n_classes x feat_dim
    Vector b;  // n_classes
    FeatureMode feature_mode = FeatureMode::Raw;
    ProbeConfig config;  // what fit_probe actually used

    std::size_t n_classes() const { return static_cast<std::size_t>(W.rows()); }
    std::size_t feat_dim() const { return static_cast<std::size_t>(W.cols()); }
    Matrix logits(const Matrix& features) const;
    /// Argmax per row; ties go to the lowest class index.
    std::vector<std::uint32_t> predict(const Matrix& features) const;
};

struct ProbeFit {
    LinearProbe probe;
    std::vector<double> loss_curve;  // mean cross-entropy per epoch
};

/// Multinomial logistic regression trained with Adam on softmax cross-entropy.
/// Reads nothing but (features, labels, n_classes, cfg).
ProbeFit fit_probe(const Matrix& features, const std::vector<std::uint32_t>& labels, std::size_t n_classes,
                   const ProbeConfig& cfg = {});

double eval_probe(const LinearProbe& probe, const Matrix& features, const std::vector<std::uint32_t>& labels);

struct LabeledFeatures {
    std::string tag;
    Matrix features;
    std::vector<std::uint32_t> labels;
    std::size_t n_classes = 0;
};

struct ProbeReport {
    std::vector<std::pair<std::string, double>> accuracies;
    std::vector<double> train_loss_curve;
};

/// Accuracy per dataset in order. Throws InvalidArgument naming the first dataset
/// whose label space differs from the probe's.
ProbeReport domain_shift_eval(const LinearProbe& probe, const std::vector<LabeledFeatures>& datasets);

void write_probe_csv(const std::filesystem::path& path, FeatureMode mode, const ProbeReport& report, bool header);

inline constexpr char kProbeMagic[] = "SAEPRB01";
inline constexpr std::uint32_t kProbeVersion = 1;

void save_probe(const std::filesystem::path& path, const LinearProbe& probe);
LinearProbe load_probe(const std::filesystem::path& path);

}  // namespace saelab
