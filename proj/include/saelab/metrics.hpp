#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "saelab/activation_store.hpp"
#include "saelab/sae.hpp"

namespace saelab {

/// (1/d) * ||x - x_hat||^2
double mse(std::span<const double> x, std::span<const double> x_hat);
/// sum |z_i|
double l1(std::span<const double> z);
/// Number of entries exactly != 0.
std::size_t l0(std::span<const double> z);

struct MetricsReport {
    std::string dataset_tag;
    std::size_t n_samples = 0;
    double mean_mse = 0.0;
    double mean_l1 = 0.0;  // also the "average activation magnitude" axis
    double mean_l0 = 0.0;
    double dead_fraction = 0.0;  // latents with z > 0 on no row
    // 1 - SSE / SST over the whole dataset.
    double explained_variance = 0.0;
    bool degenerate_variance = false;  // SST == 0: EV reported as 1 if SSE == 0, else 0
    std::string error;                 // non-empty when evaluation of this dataset failed
};

MetricsReport dataset_eval(const SaeParams& params, const SaeArchitecture& arch, const DatasetView& view,
                           std::string tag = {});

struct TaggedDataset {
    std::string tag;
    DatasetView view;
};

/// One report per dataset, in order. A failing dataset yields a report with
/// `error` set; the rest are still evaluated.
std::vector<MetricsReport> ood_eval(const SaeParams& params, const SaeArchitecture& arch,
                                    const std::vector<TaggedDataset>& datasets);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);

}  // namespace saelab
