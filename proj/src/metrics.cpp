#include "saelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab {

double mse(std::span<const double> x, std::span<const double> x_hat) {
    if (x.size() != x_hat.size()) {
        throw InvalidArgument(fmt::format("mse: length mismatch ({} vs {})", x.size(), x_hat.size()));
    }
    if (x.empty()) throw InvalidArgument("mse: empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - x_hat[i];
        acc += r * r;
    }
    return acc / static_cast<double>(x.size());
}

double l1(std::span<const double> z) {
    double acc = 0.0;
    for (double v : z) acc += std::abs(v);
    return acc;
}

std::size_t l0(std::span<const double> z) {
    return static_cast<std::size_t>(std::count_if(z.begin(), z.end(), [](double v) { return v != 0.0; }));
}

MetricsReport dataset_eval(const SaeParams& params, const SaeArchitecture& arch, const DatasetView& view,
                           std::string tag) {
    if (view.size() == 0) throw InvalidArgument("dataset_eval: empty dataset");
    if (view.dim() != params.d) {
        throw InvalidArgument(fmt::format("dataset dim {} does not match SAE input dim {}", view.dim(), params.d));
    }
    constexpr std::size_t kChunk = 1024;
    const std::size_t n = view.size();
    double sum_mse = 0.0, sum_l1 = 0.0, sum_l0 = 0.0, sse = 0.0;
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(params.d));
    std::vector<char> fired(params.n, 0);

    Matrix x;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t end = std::min(n, start + kChunk);
        view.data->gather(std::span(view.indices).subspan(start, end - start), x);
        const Matrix z = encode(params, arch, x);
        const Matrix xhat = decode(params, z);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const auto cols = static_cast<std::size_t>(x.cols());
            std::span<const double> xr(x.data() + r * x.cols(), cols);
            std::span<const double> hr(xhat.data() + r * xhat.cols(), cols);
            std::span<const double> zr(z.data() + r * z.cols(), params.n);
            const double m = mse(xr, hr);
            sum_mse += m;
            sse += m * static_cast<double>(cols);
            sum_l1 += l1(zr);
            sum_l0 += static_cast<double>(l0(zr));
            for (std::size_t i = 0; i < params.n; ++i) {
                if (zr[i] > 0.0) fired[i] = 1;
            }
        }
        mean += x.colwise().sum().transpose();
    }
    mean /= static_cast<double>(n);

    // Second pass for the total sum of squares about the mean.
    double sst = 0.0;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t end = std::min(n, start + kChunk);
        view.data->gather(std::span(view.indices).subspan(start, end - start), x);
        sst += (x.rowwise() - mean.transpose()).squaredNorm();
    }

    MetricsReport rep;
    rep.dataset_tag = std::move(tag);
    rep.n_samples = n;
    rep.mean_mse = sum_mse / static_cast<double>(n);
    rep.mean_l1 = sum_l1 / static_cast<double>(n);
    rep.mean_l0 = sum_l0 / static_cast<double>(n);
    rep.dead_fraction =
        static_cast<double>(std::count(fired.begin(), fired.end(), 0)) / static_cast<double>(params.n);
    if (sst > 0.0) {
        rep.explained_variance = 1.0 - sse / sst;
    } else {
        rep.degenerate_variance = true;
        rep.explained_variance = sse == 0.0 ? 1.0 : 0.0;
    }
    return rep;
}

std::vector<MetricsReport> ood_eval(const SaeParams& params, const SaeArchitecture& arch,
                                    const std::vector<TaggedDataset>& datasets) {
    std::vector<MetricsReport> out;
    out.reserve(datasets.size());
    for (const auto& ds : datasets) {
        try {
            out.push_back(dataset_eval(params, arch, ds.view, ds.tag));
        } catch (const std::exception& e) {
            MetricsReport failed;
            failed.dataset_tag = ds.tag;
            failed.error = e.what();
            out.push_back(std::move(failed));
        }
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << "dataset_tag,n,mean_mse,mean_l1,mean_l0,dead_frac,explained_var\n";
    for (const auto& r : reports) {
        if (!r.error.empty()) {
            out << fmt::format("{},0,nan,nan,nan,nan,nan\n", r.dataset_tag);
            continue;
        }
        out << fmt::format("{},{},{},{},{},{},{}\n", r.dataset_tag, r.n_samples, r.mean_mse, r.mean_l1, r.mean_l0,
                           r.dead_fraction, r.explained_variance);
    }
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace saelab
