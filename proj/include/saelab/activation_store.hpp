#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "saelab/types.hpp"

namespace saelab {

inline constexpr char kDatasetMagic[] = "SAEACT01";
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetMeta {
    std::string source_model;
    std::string layer_tag;
    std::uint32_t n_classes = 0;
    std::string notes;

    nlohmann::json to_json() const;
    static DatasetMeta from_json(const nlohmann::json& j);
};

/// Read-only matrix of activation rows, either memory-mapped from an SAEACT01
/// file or owned in memory. Immutable after construction, so it is safe to share
/// across threads.
class ActivationDataset {
public:
    /// Validates header, exact file length, finiteness, and label range.
    static std::shared_ptr<const ActivationDataset> open(const std::filesystem::path& path);

    /// In-memory dataset with the same invariants as a file-backed one.
    static std::shared_ptr<const ActivationDataset> from_rows(std::vector<float> rows, std::size_t n_samples,
                                                              std::size_t dim,
                                                              std::optional<std::vector<std::uint32_t>> labels,
                                                              DatasetMeta meta);
    static std::shared_ptr<const ActivationDataset> from_matrix(const Matrix& rows,
                                                                std::optional<std::vector<std::uint32_t>> labels,
                                                                DatasetMeta meta);

    ~ActivationDataset();
    ActivationDataset(const ActivationDataset&) = delete;
    ActivationDataset& operator=(const ActivationDataset&) = delete;

    std::size_t n_samples() const { return n_samples_; }
    std::size_t dim() const { return dim_; }
    bool has_labels() const { return has_labels_; }
    std::uint32_t n_classes() const { return meta_.n_classes; }
    const DatasetMeta& meta() const { return meta_; }

    void read_row(std::size_t i, std::span<float> out) const;
    std::uint32_t label(std::size_t i) const;
    /// Widen the listed rows into `out` (resized to indices.size() x dim).
    void gather(std::span<const std::size_t> indices, Matrix& out) const;
    Matrix to_matrix() const;
    std::vector<std::uint32_t> labels() const;

private:
    ActivationDataset() = default;
    void validate_payload() const;

    std::size_t n_samples_ = 0;
    std::size_t dim_ = 0;
    bool has_labels_ = false;
    DatasetMeta meta_;

    // Either mapped file bytes or owned float storage backs the payload.
    const char* payload_ = nullptr;
    const char* label_bytes_ = nullptr;
    void* map_base_ = nullptr;
    std::size_t map_size_ = 0;
    std::vector<float> owned_rows_;
    std::vector<std::uint32_t> owned_labels_;
};

using DatasetPtr = std::shared_ptr<const ActivationDataset>;

/// Writes the SAEACT01 format. Labels, when present, must be < meta.n_classes
/// (or meta.n_classes is inferred as max label + 1 when left at 0).
void write_dataset(const std::filesystem::path& path, std::span<const float> rows, std::size_t n_samples,
                   std::size_t dim, const std::optional<std::vector<std::uint32_t>>& labels, DatasetMeta meta);
void write_dataset(const std::filesystem::path& path, const Matrix& rows,
                   const std::optional<std::vector<std::uint32_t>>& labels, DatasetMeta meta);

/// Subset of a dataset's rows, in the listed order.
struct DatasetView {
    DatasetPtr data;
    std::vector<std::size_t> indices;

    static DatasetView all(DatasetPtr data);
    std::size_t size() const { return indices.size(); }
    std::size_t dim() const { return data->dim(); }
    bool has_labels() const { return data->has_labels(); }
    Matrix rows() const;
    std::vector<std::uint32_t> labels() const;
};

struct Batch {
    Matrix rows;
    std::optional<std::vector<std::uint32_t>> labels;
    std::vector<std::size_t> indices;
};

/// One epoch over a view. Without a seed rows come in view order; with one, in a
/// Fisher-Yates permutation determined by that seed. The final batch may be short.
class BatchStream {
public:
    BatchStream(DatasetView view, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed = std::nullopt);

    std::optional<Batch> next();
    std::size_t batches_per_epoch() const;
    const std::vector<std::size_t>& order() const { return order_; }

private:
    DatasetView view_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Runs a BatchStream on a producer thread with a bounded queue. Batches are
/// value objects, so the consumer sees exactly the sequence the stream emits
/// regardless of depth.
class PrefetchingBatchStream {
public:
    PrefetchingBatchStream(BatchStream stream, std::size_t depth);
    ~PrefetchingBatchStream();
    PrefetchingBatchStream(const PrefetchingBatchStream&) = delete;
    PrefetchingBatchStream& operator=(const PrefetchingBatchStream&) = delete;

    std::optional<Batch> next();

private:
    void produce();

    BatchStream stream_;
    std::size_t depth_;
    std::deque<Batch> queue_;
    bool done_ = false;
    bool stop_ = false;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::thread worker_;
};

/// Disjoint (train, val) partition; val size is round(val_fraction * n).
std::pair<DatasetView, DatasetView> split(const DatasetView& view, double val_fraction, std::uint64_t seed);

struct DatasetStats {
    Vector mean;
    Vector stddev;  // population
};

DatasetStats dataset_stats(const DatasetView& view);

/// Deterministic permutation of [0, n) for a seed.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace saelab
