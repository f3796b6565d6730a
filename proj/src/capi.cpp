#include "saelab/saelab.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "saelab/activation_store.hpp"
#include "saelab/errors.hpp"
#include "saelab/ontology.hpp"
#include "saelab/sae.hpp"
#include "saelab/steering.hpp"
#include "saelab/workflows.hpp"

struct sae_dataset {
    saelab::DatasetPtr data;
};

struct sae_model {
    saelab::SaeParams params;
    saelab::SaeArchitecture arch;
};

struct sae_hierarchy {
    saelab::Hierarchy h;
};

namespace {

thread_local std::string g_last_error;

sae_status status_for(saelab::ErrorKind kind) {
    switch (kind) {
        case saelab::ErrorKind::InvalidArgument: return SAE_ERR_INVALID_ARGUMENT;
        case saelab::ErrorKind::Config: return SAE_ERR_CONFIG;
        case saelab::ErrorKind::Numerical: return SAE_ERR_NUMERICAL;
        case saelab::ErrorKind::Io: return SAE_ERR_IO;
        case saelab::ErrorKind::Format: return SAE_ERR_FORMAT;
    }
    return SAE_ERR_INTERNAL;
}

template <typename Fn>
sae_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SAE_OK;
    } catch (const saelab::Error& e) {
        g_last_error = e.what();
        return status_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return SAE_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return SAE_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SAE_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return SAE_ERR_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw saelab::InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

saelab::SaeArchitecture to_arch(const sae_arch& a) {
    saelab::SaeArchitecture out;
    switch (a.kind) {
        case SAE_KIND_RELU: out.kind = saelab::SaeKind::Relu; break;
        case SAE_KIND_TOPK: out.kind = saelab::SaeKind::TopK; break;
        case SAE_KIND_GATED: out.kind = saelab::SaeKind::Gated; break;
        default: throw saelab::InvalidArgument("unknown architecture kind");
    }
    out.lambda = a.lambda;
    out.k = a.k;
    out.topk_use_bias = a.topk_use_bias != 0;
    out.tie_gate_weights = a.tie_gate_weights != 0;
    return out;
}

sae_arch from_arch(const saelab::SaeArchitecture& a) {
    sae_arch out{};
    out.kind = static_cast<sae_kind>(static_cast<int>(a.kind));
    out.lambda = a.lambda;
    out.k = a.k;
    out.topk_use_bias = a.topk_use_bias ? 1 : 0;
    out.tie_gate_weights = a.tie_gate_weights ? 1 : 0;
    return out;
}

}  // namespace

extern "C" {

int sae_exit_code(sae_status status) {
    switch (status) {
        case SAE_OK: return 0;
        case SAE_ERR_INVALID_ARGUMENT: return saelab::exit_code_for(saelab::ErrorKind::InvalidArgument);
        case SAE_ERR_CONFIG: return saelab::exit_code_for(saelab::ErrorKind::Config);
        case SAE_ERR_NUMERICAL: return saelab::exit_code_for(saelab::ErrorKind::Numerical);
        case SAE_ERR_IO: return saelab::exit_code_for(saelab::ErrorKind::Io);
        case SAE_ERR_FORMAT: return saelab::exit_code_for(saelab::ErrorKind::Format);
        case SAE_ERR_INTERNAL: break;
    }
    return 1;
}

const char* sae_last_error(void) { return g_last_error.c_str(); }

const char* sae_version(void) { return "1.0.0"; }

void sae_string_free(char* s) { std::free(s); }

sae_status sae_dataset_open(const char* path, sae_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new sae_dataset{saelab::ActivationDataset::open(path)};
    });
}

void sae_dataset_free(sae_dataset* ds) { delete ds; }

sae_status sae_dataset_info(const sae_dataset* ds, uint64_t* n_samples, uint32_t* dim, int* has_labels,
                            uint32_t* n_classes) {
    return guarded([&] {
        require(ds, "dataset");
        if (n_samples) *n_samples = ds->data->n_samples();
        if (dim) *dim = static_cast<uint32_t>(ds->data->dim());
        if (has_labels) *has_labels = ds->data->has_labels() ? 1 : 0;
        if (n_classes) *n_classes = ds->data->n_classes();
    });
}

sae_status sae_dataset_meta(const sae_dataset* ds, char** json_out) {
    return guarded([&] {
        require(ds, "dataset");
        require(json_out, "json_out");
        *json_out = dup_string(ds->data->meta().to_json().dump());
    });
}

sae_status sae_dataset_read_row(const sae_dataset* ds, uint64_t row, float* out, uint32_t dim) {
    return guarded([&] {
        require(ds, "dataset");
        require(out, "out");
        if (dim != ds->data->dim()) throw saelab::InvalidArgument("buffer dim does not match the dataset");
        ds->data->read_row(row, std::span<float>(out, dim));
    });
}

sae_status sae_dataset_label(const sae_dataset* ds, uint64_t row, uint32_t* label) {
    return guarded([&] {
        require(ds, "dataset");
        require(label, "label");
        *label = ds->data->label(row);
    });
}

sae_status sae_dataset_write(const char* path, const float* rows, uint64_t n_samples, uint32_t dim,
                             const uint32_t* labels, uint32_t n_classes, const char* meta_json) {
    return guarded([&] {
        require(path, "path");
        require(rows, "rows");
        saelab::DatasetMeta meta;
        if (meta_json) meta = saelab::DatasetMeta::from_json(nlohmann::json::parse(meta_json));
        meta.n_classes = n_classes;
        std::optional<std::vector<std::uint32_t>> lab;
        if (labels) lab.emplace(labels, labels + n_samples);
        saelab::write_dataset(path, std::span<const float>(rows, n_samples * dim), n_samples, dim, lab, meta);
    });
}

sae_status sae_model_init(const sae_arch* arch, uint32_t d, uint32_t expansion, uint64_t seed, sae_model** out) {
    return guarded([&] {
        require(arch, "arch");
        require(out, "out");
        auto a = to_arch(*arch);
        auto params = saelab::init_params(a, d, expansion, seed);
        *out = new sae_model{std::move(params), a};
    });
}

sae_status sae_model_load(const char* path, sae_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto ckpt = saelab::load_checkpoint(path);
        *out = new sae_model{std::move(ckpt.params), ckpt.arch};
    });
}

sae_status sae_model_save(const sae_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        saelab::save_checkpoint(path, model->params, model->arch);
    });
}

void sae_model_free(sae_model* model) { delete model; }

sae_status sae_model_info(const sae_model* model, uint32_t* d, uint32_t* n, sae_arch* arch) {
    return guarded([&] {
        require(model, "model");
        if (d) *d = static_cast<uint32_t>(model->params.d);
        if (n) *n = static_cast<uint32_t>(model->params.n);
        if (arch) *arch = from_arch(model->arch);
    });
}

sae_status sae_model_checksum(const sae_model* model, uint64_t* checksum) {
    return guarded([&] {
        require(model, "model");
        require(checksum, "checksum");
        *checksum = saelab::params_checksum(model->params);
    });
}

sae_status sae_model_encode(const sae_model* model, const double* x, uint64_t rows, double* z) {
    return guarded([&] {
        require(model, "model");
        require(x, "x");
        require(z, "z");
        const auto d = static_cast<Eigen::Index>(model->params.d);
        const auto n = static_cast<Eigen::Index>(model->params.n);
        Eigen::Map<const saelab::Matrix> in(x, static_cast<Eigen::Index>(rows), d);
        Eigen::Map<saelab::Matrix>(z, static_cast<Eigen::Index>(rows), n) =
            saelab::encode(model->params, model->arch, saelab::Matrix(in));
    });
}

sae_status sae_model_decode(const sae_model* model, const double* z, uint64_t rows, double* x_hat) {
    return guarded([&] {
        require(model, "model");
        require(z, "z");
        require(x_hat, "x_hat");
        const auto d = static_cast<Eigen::Index>(model->params.d);
        const auto n = static_cast<Eigen::Index>(model->params.n);
        Eigen::Map<const saelab::Matrix> in(z, static_cast<Eigen::Index>(rows), n);
        Eigen::Map<saelab::Matrix>(x_hat, static_cast<Eigen::Index>(rows), d) =
            saelab::decode(model->params, saelab::Matrix(in));
    });
}

sae_status sae_model_feature_direction(const sae_model* model, uint32_t k, double* direction) {
    return guarded([&] {
        require(model, "model");
        require(direction, "direction");
        auto sv = saelab::feature_direction(model->params, k);
        std::copy(sv.direction.data(), sv.direction.data() + sv.direction.size(), direction);
    });
}

sae_status sae_steer(const double* x, const double* direction, uint32_t d, double lambda, double* out) {
    return guarded([&] {
        require(x, "x");
        require(direction, "direction");
        require(out, "out");
        saelab::SteeringVector sv;
        sv.direction = Eigen::Map<const saelab::Vector>(direction, d);
        double norm = sv.direction.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw saelab::NumericalError("steering direction has zero norm");
        sv.direction /= norm;
        Eigen::Map<saelab::Vector>(out, d) = saelab::steer(Eigen::Map<const saelab::Vector>(x, d), sv, lambda);
    });
}

sae_status sae_hierarchy_load(const char* path, sae_hierarchy** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new sae_hierarchy{saelab::Hierarchy::load(path)};
    });
}

void sae_hierarchy_free(sae_hierarchy* h) { delete h; }

sae_status sae_hierarchy_info(const sae_hierarchy* h, uint32_t* n_nodes, uint32_t* n_leaves) {
    return guarded([&] {
        require(h, "hierarchy");
        if (n_nodes) *n_nodes = static_cast<uint32_t>(h->h.size());
        if (n_leaves) *n_leaves = static_cast<uint32_t>(h->h.n_leaves());
    });
}

sae_status sae_hierarchy_lch(const sae_hierarchy* h, const uint32_t* classes, uint32_t count, char* id_buf,
                             size_t id_buf_len, double* height, double* coverage) {
    return guarded([&] {
        require(h, "hierarchy");
        require(classes, "classes");
        std::vector<std::size_t> c(classes, classes + count);
        const std::string& id = h->h.id(saelab::lch(h->h, c));
        if (id_buf) {
            if (id_buf_len < id.size() + 1) throw saelab::InvalidArgument("id buffer too small");
            std::memcpy(id_buf, id.c_str(), id.size() + 1);
        }
        if (height) *height = saelab::lch_height(h->h, c);
        if (coverage) *coverage = saelab::coverage(h->h, c);
    });
}

sae_status sae_run_command(const char* command, const char* config_path, const sae_run_options* opts,
                           char** summary_json) {
    return guarded([&] {
        require(command, "command");
        require(config_path, "config_path");
        saelab::workflows::Overrides ov;
        if (opts) {
            if (opts->has_seed) ov.seed = opts->seed;
            if (opts->out) ov.out = opts->out;
            if (opts->threads) ov.threads = opts->threads;
        }
        auto result = saelab::workflows::run_command(command, config_path, ov);
        if (summary_json) *summary_json = dup_string(result.summary.dump());
    });
}

}  // extern "C"
