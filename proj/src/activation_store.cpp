#include "saelab/activation_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "saelab/binary_io.hpp"
#include "saelab/errors.hpp"

namespace saelab {

namespace {

constexpr std::size_t kMagicLen = 8;
// magic + version + n_samples + dim + has_labels + n_classes + meta_len
constexpr std::size_t kFixedHeader = kMagicLen + 4 + 8 + 4 + 1 + 4 + 4;

void check_rows_finite(std::span<const float> rows, std::size_t dim) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!std::isfinite(rows[i])) {
            throw InvalidArgument(fmt::format("non-finite value in row {} (column {})", i / dim, i % dim));
        }
    }
}

std::uint32_t resolve_classes(const std::optional<std::vector<std::uint32_t>>& labels, std::uint32_t declared,
                              std::size_t n_samples) {
    if (!labels) return 0;
    if (labels->size() != n_samples) {
        throw InvalidArgument(fmt::format("label count {} does not match n_samples {}", labels->size(), n_samples));
    }
    const std::uint32_t max_label = labels->empty() ? 0 : *std::max_element(labels->begin(), labels->end());
    const std::uint32_t n_classes = declared == 0 ? max_label + 1 : declared;
    if (max_label >= n_classes) {
        throw InvalidArgument(fmt::format("label {} outside [0, {})", max_label, n_classes));
    }
    return n_classes;
}

}  // namespace

nlohmann::json DatasetMeta::to_json() const {
    return {{"source_model", source_model}, {"layer_tag", layer_tag}, {"n_classes", n_classes}, {"notes", notes}};
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& j) {
    DatasetMeta m;
    if (!j.is_object()) return m;
    m.source_model = j.value("source_model", "");
    m.layer_tag = j.value("layer_tag", "");
    m.n_classes = j.value("n_classes", 0u);
    m.notes = j.value("notes", "");
    return m;
}

ActivationDataset::~ActivationDataset() {
    if (map_base_ != nullptr) ::munmap(map_base_, map_size_);
}

std::shared_ptr<const ActivationDataset> ActivationDataset::open(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw IoError(fmt::format("cannot open dataset '{}': {}", path.string(), std::strerror(errno)));
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw IoError(fmt::format("cannot stat '{}'", path.string()));
    }
    const auto file_size = static_cast<std::size_t>(st.st_size);
    if (file_size < kMagicLen) {
        ::close(fd);
        throw FormatError(FormatErrc::UnrecognizedFormat,
                          fmt::format("unrecognized format: '{}' is too short to be a dataset", path.string()));
    }
    void* base = ::mmap(nullptr, file_size, PROT_READ, MAP_PRIVATE, fd, 0);
    ::close(fd);
    if (base == MAP_FAILED) throw IoError(fmt::format("cannot map '{}'", path.string()));

    std::shared_ptr<ActivationDataset> ds(new ActivationDataset());
    ds->map_base_ = base;
    ds->map_size_ = file_size;

    const char* bytes = static_cast<const char*>(base);
    if (std::memcmp(bytes, kDatasetMagic, kMagicLen) != 0) {
        throw FormatError(FormatErrc::UnrecognizedFormat,
                          fmt::format("unrecognized format: '{}' lacks the SAEACT01 magic", path.string()));
    }
    io::ByteReader r(bytes, file_size);
    r.string(kMagicLen);
    if (!r.has(kFixedHeader - kMagicLen)) {
        throw FormatError(FormatErrc::TruncatedHeader, fmt::format("truncated header in '{}'", path.string()));
    }
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError(FormatErrc::UnsupportedVersion,
                          fmt::format("unsupported dataset version {} in '{}'", version, path.string()));
    }
    const std::uint64_t n_samples = r.u64();
    const std::uint32_t dim = r.u32();
    const std::uint8_t has_labels = r.u8();
    const std::uint32_t n_classes = r.u32();
    const std::uint32_t meta_len = r.u32();
    if (n_samples == 0 || dim == 0) {
        throw FormatError(FormatErrc::BadHeader, "dataset header declares zero samples or zero dim");
    }
    if (n_samples > (std::numeric_limits<std::size_t>::max() / 8) / dim) {
        throw FormatError(FormatErrc::BadHeader, "dataset header declares an impossible size");
    }
    if (has_labels > 1) throw FormatError(FormatErrc::BadHeader, "has_labels flag must be 0 or 1");
    if (has_labels == 1 && n_classes == 0) {
        throw FormatError(FormatErrc::BadHeader, "labeled dataset declares n_classes = 0");
    }
    if (!r.has(meta_len)) {
        throw FormatError(FormatErrc::TruncatedHeader, "truncated header: metadata block is cut short");
    }
    const std::string meta_text = r.string(meta_len);
    nlohmann::json meta_json;
    try {
        meta_json = meta_len == 0 ? nlohmann::json::object() : nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrc::BadMetadata, fmt::format("metadata is not valid JSON: {}", e.what()));
    }
    ds->meta_ = DatasetMeta::from_json(meta_json);
    ds->meta_.n_classes = has_labels ? n_classes : 0;
    ds->n_samples_ = n_samples;
    ds->dim_ = dim;
    ds->has_labels_ = has_labels == 1;

    const std::size_t header_size = r.position();
    const std::size_t payload_bytes = n_samples * dim * sizeof(float);
    const std::size_t label_bytes = has_labels ? n_samples * sizeof(std::uint32_t) : 0;
    const std::size_t expected = header_size + payload_bytes + label_bytes;
    if (file_size < expected) {
        throw FormatError(FormatErrc::TruncatedPayload,
                          fmt::format("truncated payload: expected {} bytes, file has {}", expected, file_size));
    }
    if (file_size > expected) {
        throw FormatError(FormatErrc::TrailingBytes,
                          fmt::format("{} trailing bytes after payload (expected {} bytes total)",
                                      file_size - expected, expected));
    }
    ds->payload_ = bytes + header_size;
    ds->label_bytes_ = has_labels ? ds->payload_ + payload_bytes : nullptr;
    ds->validate_payload();
    return ds;
}

void ActivationDataset::validate_payload() const {
    std::vector<float> row(dim_);
    for (std::size_t i = 0; i < n_samples_; ++i) {
        read_row(i, row);
        for (float v : row) {
            if (!std::isfinite(v)) {
                throw FormatError(FormatErrc::NonFinite, fmt::format("non-finite value in row {}", i));
            }
        }
        if (has_labels_ && label(i) >= meta_.n_classes) {
            throw FormatError(FormatErrc::LabelOutOfRange,
                              fmt::format("label {} of row {} outside [0, {})", label(i), i, meta_.n_classes));
        }
    }
}

std::shared_ptr<const ActivationDataset> ActivationDataset::from_rows(
    std::vector<float> rows, std::size_t n_samples, std::size_t dim,
    std::optional<std::vector<std::uint32_t>> labels, DatasetMeta meta) {
    if (n_samples == 0) throw InvalidArgument("n_samples must be ≥ 1");
    if (dim == 0) throw InvalidArgument("dim must be ≥ 1");
    if (rows.size() != n_samples * dim) {
        throw InvalidArgument(fmt::format("row buffer holds {} values, expected {}", rows.size(), n_samples * dim));
    }
    check_rows_finite(rows, dim);
    meta.n_classes = resolve_classes(labels, meta.n_classes, n_samples);

    std::shared_ptr<ActivationDataset> ds(new ActivationDataset());
    ds->n_samples_ = n_samples;
    ds->dim_ = dim;
    ds->has_labels_ = labels.has_value();
    ds->meta_ = std::move(meta);
    ds->owned_rows_ = std::move(rows);
    ds->payload_ = reinterpret_cast<const char*>(ds->owned_rows_.data());
    if (labels) {
        ds->owned_labels_ = std::move(*labels);
        ds->label_bytes_ = reinterpret_cast<const char*>(ds->owned_labels_.data());
    }
    return ds;
}

std::shared_ptr<const ActivationDataset> ActivationDataset::from_matrix(
    const Matrix& rows, std::optional<std::vector<std::uint32_t>> labels, DatasetMeta meta) {
    std::vector<float> flat(static_cast<std::size_t>(rows.size()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            flat[static_cast<std::size_t>(i * rows.cols() + j)] = static_cast<float>(rows(i, j));
        }
    }
    return from_rows(std::move(flat), static_cast<std::size_t>(rows.rows()), static_cast<std::size_t>(rows.cols()),
                     std::move(labels), std::move(meta));
}

void ActivationDataset::read_row(std::size_t i, std::span<float> out) const {
    if (i >= n_samples_) throw InvalidArgument(fmt::format("row {} out of range ({} rows)", i, n_samples_));
    std::memcpy(out.data(), payload_ + i * dim_ * sizeof(float), dim_ * sizeof(float));
}

std::uint32_t ActivationDataset::label(std::size_t i) const {
    if (!has_labels_) throw InvalidArgument("dataset has no labels");
    std::uint32_t v;
    std::memcpy(&v, label_bytes_ + i * sizeof(std::uint32_t), sizeof(v));
    return v;
}

void ActivationDataset::gather(std::span<const std::size_t> indices, Matrix& out) const {
    out.resize(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(dim_));
    std::vector<float> row(dim_);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        read_row(indices[r], row);
        for (std::size_t c = 0; c < dim_; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
}

Matrix ActivationDataset::to_matrix() const {
    std::vector<std::size_t> idx(n_samples_);
    std::iota(idx.begin(), idx.end(), 0);
    Matrix m;
    gather(idx, m);
    return m;
}

std::vector<std::uint32_t> ActivationDataset::labels() const {
    std::vector<std::uint32_t> out;
    if (!has_labels_) return out;
    out.resize(n_samples_);
    for (std::size_t i = 0; i < n_samples_; ++i) out[i] = label(i);
    return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const float> rows, std::size_t n_samples,
                   std::size_t dim, const std::optional<std::vector<std::uint32_t>>& labels, DatasetMeta meta) {
    if (n_samples == 0) throw InvalidArgument("n_samples must be ≥ 1");
    if (dim == 0) throw InvalidArgument("dim must be ≥ 1");
    if (rows.size() != n_samples * dim) {
        throw InvalidArgument(fmt::format("row buffer holds {} values, expected {}", rows.size(), n_samples * dim));
    }
    check_rows_finite(rows, dim);
    meta.n_classes = resolve_classes(labels, meta.n_classes, n_samples);

    const std::string meta_text = meta.to_json().dump();
    io::ByteWriter w;
    w.magic(std::string_view(kDatasetMagic, kMagicLen));
    w.u32(kDatasetVersion);
    w.u64(n_samples);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u8(labels ? 1 : 0);
    w.u32(meta.n_classes);
    w.u32(static_cast<std::uint32_t>(meta_text.size()));
    w.bytes(meta_text.data(), meta_text.size());
    w.bytes(rows.data(), rows.size() * sizeof(float));
    if (labels) w.bytes(labels->data(), labels->size() * sizeof(std::uint32_t));
    w.write_file(path);
}

void write_dataset(const std::filesystem::path& path, const Matrix& rows,
                   const std::optional<std::vector<std::uint32_t>>& labels, DatasetMeta meta) {
    std::vector<float> flat(static_cast<std::size_t>(rows.size()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            flat[static_cast<std::size_t>(i * rows.cols() + j)] = static_cast<float>(rows(i, j));
        }
    }
    write_dataset(path, flat, static_cast<std::size_t>(rows.rows()), static_cast<std::size_t>(rows.cols()), labels,
                  std::move(meta));
}

DatasetView DatasetView::all(DatasetPtr data) {
    DatasetView v{std::move(data), {}};
    v.indices.resize(v.data->n_samples());
    std::iota(v.indices.begin(), v.indices.end(), 0);
    return v;
}

Matrix DatasetView::rows() const {
    Matrix m;
    data->gather(indices, m);
    return m;
}

std::vector<std::uint32_t> DatasetView::labels() const {
    std::vector<std::uint32_t> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(data->label(i));
    return out;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::mt19937_64 rng(seed);
    // Fisher-Yates, high to low.
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(p[i - 1], p[pick(rng)]);
    }
    return p;
}

BatchStream::BatchStream(DatasetView view, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed)
    : view_(std::move(view)), batch_size_(batch_size) {
    if (batch_size_ == 0) throw InvalidArgument("batch_size must be ≥ 1");
    if (shuffle_seed) {
        const auto perm = permutation(view_.size(), *shuffle_seed);
        order_.reserve(perm.size());
        for (std::size_t p : perm) order_.push_back(view_.indices[p]);
    } else {
        order_ = view_.indices;
    }
}

std::size_t BatchStream::batches_per_epoch() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::optional<Batch> BatchStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    Batch b;
    b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(end));
    view_.data->gather(b.indices, b.rows);
    if (view_.has_labels()) {
        std::vector<std::uint32_t> labels;
        labels.reserve(b.indices.size());
        for (std::size_t i : b.indices) labels.push_back(view_.data->label(i));
        b.labels = std::move(labels);
    }
    cursor_ = end;
    return b;
}

PrefetchingBatchStream::PrefetchingBatchStream(BatchStream stream, std::size_t depth)
    : stream_(std::move(stream)), depth_(std::max<std::size_t>(depth, 1)) {
    worker_ = std::thread([this] { produce(); });
}

PrefetchingBatchStream::~PrefetchingBatchStream() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void PrefetchingBatchStream::produce() {
    for (;;) {
        auto batch = stream_.next();
        std::unique_lock lock(mutex_);
        if (!batch) {
            done_ = true;
            cv_.notify_all();
            return;
        }
        cv_.wait(lock, [this] { return stop_ || queue_.size() < depth_; });
        if (stop_) return;
        queue_.push_back(std::move(*batch));
        cv_.notify_all();
    }
}

std::optional<Batch> PrefetchingBatchStream::next() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty() || done_; });
    if (queue_.empty()) return std::nullopt;
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return b;
}

std::pair<DatasetView, DatasetView> split(const DatasetView& view, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw InvalidArgument(fmt::format("val_fraction must be in (0, 1), got {}", val_fraction));
    }
    const std::size_t n = view.size();
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    const auto perm = permutation(n, seed);
    DatasetView train{view.data, {}};
    DatasetView val{view.data, {}};
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_val ? val : train).indices.push_back(view.indices[perm[i]]);
    }
    std::sort(train.indices.begin(), train.indices.end());
    std::sort(val.indices.begin(), val.indices.end());
    return {std::move(train), std::move(val)};
}

DatasetStats dataset_stats(const DatasetView& view) {
    if (view.size() < 2) throw InvalidArgument("dataset_stats needs at least 2 rows for a standard deviation");
    const std::size_t d = view.dim();
    // Welford, one row at a time.
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(d));
    Vector m2 = Vector::Zero(static_cast<Eigen::Index>(d));
    std::vector<float> row(d);
    std::size_t count = 0;
    for (std::size_t i : view.indices) {
        view.data->read_row(i, row);
        ++count;
        for (std::size_t c = 0; c < d; ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            const double x = row[c];
            const double delta = x - mean(ci);
            mean(ci) += delta / static_cast<double>(count);
            m2(ci) += delta * (x - mean(ci));
        }
    }
    Vector var = m2 / static_cast<double>(count);
    return {mean, var.cwiseMax(0.0).cwiseSqrt()};
}

}  // namespace saelab
