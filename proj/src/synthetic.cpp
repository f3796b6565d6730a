#include "saelab/synthetic.hpp"

#include <numeric>
#include <random>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab::synthetic {

namespace {

Matrix unit_rows(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        do {
            for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = normal(rng);
        } while (out.row(i).norm() == 0.0);
        out.row(i).normalize();
    }
    return out;
}

void check_coefficients(double lo, double hi) {
    if (!(lo >= 0.0 && hi >= lo)) throw InvalidArgument(fmt::format("coefficient range [{}, {}] is invalid", lo, hi));
}

}  // namespace

Matrix gaussian(std::size_t rows, std::size_t dim, std::uint64_t seed, double scale) {
    if (rows == 0 || dim == 0) throw InvalidArgument("gaussian: rows and dim must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = normal(rng);
    return out;
}

SparseDictionary sparse_dictionary(std::size_t rows, std::size_t dim, std::size_t n_atoms, std::size_t active,
                                   std::uint64_t seed, double coef_lo, double coef_hi) {
    if (rows == 0 || dim == 0) throw InvalidArgument("sparse_dictionary: rows and dim must be >= 1");
    if (active == 0 || active > n_atoms)
        throw InvalidArgument(fmt::format("sparse_dictionary: need 1 <= active ({}) <= n_atoms ({})", active, n_atoms));
    check_coefficients(coef_lo, coef_hi);
    std::mt19937_64 rng(seed);
    SparseDictionary out;
    out.atoms = unit_rows(n_atoms, dim, rng);
    out.data = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    out.active.resize(rows);
    std::uniform_real_distribution<double> coef(coef_lo, coef_hi);
    std::vector<std::size_t> pool(n_atoms);
    for (std::size_t r = 0; r < rows; ++r) {
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        // Partial Fisher-Yates: the first `active` slots are a uniform sample without replacement.
        for (std::size_t i = 0; i < active; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n_atoms - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        for (std::size_t i = 0; i < active; ++i) {
            out.data.row(static_cast<Eigen::Index>(r)) += coef(rng) * out.atoms.row(static_cast<Eigen::Index>(pool[i]));
            out.active[r].push_back(pool[i]);
        }
    }
    return out;
}

SparseDictionary clustered_dictionary(std::size_t rows, std::size_t dim, const ClusterLayout& layout,
                                      std::uint64_t seed, double coef_lo, double coef_hi) {
    if (rows == 0 || dim == 0) throw InvalidArgument("clustered_dictionary: rows and dim must be >= 1");
    if (layout.groups == 0 || layout.classes_per_group == 0 || layout.distractors == 0)
        throw InvalidArgument("clustered_dictionary: layout sizes must be >= 1");
    check_coefficients(coef_lo, coef_hi);
    std::mt19937_64 rng(seed);
    SparseDictionary out;
    out.n_classes = layout.n_classes();
    out.atoms = unit_rows(layout.n_atoms(), dim, rng);
    out.data = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    out.active.resize(rows);
    out.labels.resize(rows);
    std::uniform_int_distribution<std::size_t> pick_class(0, out.n_classes - 1);
    std::uniform_int_distribution<std::size_t> pick_distractor(0, layout.distractors - 1);
    std::uniform_real_distribution<double> coef(coef_lo, coef_hi);
    const std::size_t class_base = layout.groups;
    const std::size_t distractor_base = layout.groups + out.n_classes;
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t c = pick_class(rng);
        std::size_t g = c / layout.classes_per_group;
        out.labels[r] = static_cast<std::uint32_t>(c);
        out.active[r] = {g, class_base + c, distractor_base + pick_distractor(rng)};
        for (std::size_t atom : out.active[r])
            out.data.row(static_cast<Eigen::Index>(r)) += coef(rng) * out.atoms.row(static_cast<Eigen::Index>(atom));
    }
    return out;
}

nlohmann::json cluster_hierarchy(const ClusterLayout& layout) {
    nlohmann::json nodes = nlohmann::json::array({{{"id", "root"}, {"name", "root"}}});
    nlohmann::json edges = nlohmann::json::array();
    nlohmann::json leaves = nlohmann::json::array();
    for (std::size_t g = 0; g < layout.groups; ++g) {
        std::string gid = fmt::format("g{}", g);
        nodes.push_back({{"id", gid}, {"name", fmt::format("group {}", g)}});
        edges.push_back({gid, "root"});
    }
    for (std::size_t c = 0; c < layout.n_classes(); ++c) {
        std::string cid = fmt::format("c{}", c);
        nodes.push_back({{"id", cid}, {"name", fmt::format("class {}", c)}});
        edges.push_back({cid, fmt::format("g{}", c / layout.classes_per_group)});
        leaves.push_back(cid);
    }
    return {{"nodes", nodes}, {"edges", edges}, {"leaves", leaves}};
}

nlohmann::json toy_hierarchy() {
    return nlohmann::json::parse(R"({
        "nodes": [{"id": "root", "name": "root"}, {"id": "h1", "name": "h1"}, {"id": "h2", "name": "h2"},
                  {"id": "a", "name": "a"}, {"id": "b", "name": "b"}, {"id": "c", "name": "c"}, {"id": "d", "name": "d"}],
        "edges": [["h1", "root"], ["h2", "root"], ["a", "h1"], ["b", "h1"], ["c", "h2"], ["d", "h2"]],
        "leaves": ["a", "b", "c", "d"]
    })");
}

Blobs blobs(std::size_t rows, std::size_t dim, std::size_t n_classes, double separation, double noise,
            std::uint64_t seed) {
    if (rows == 0 || dim == 0 || n_classes == 0) throw InvalidArgument("blobs: sizes must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Blobs out;
    out.centers.resize(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.centers.rows(); ++i)
        for (Eigen::Index j = 0; j < out.centers.cols(); ++j) out.centers(i, j) = separation * normal(rng);
    out.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    out.labels.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        auto c = static_cast<std::uint32_t>(r % n_classes);
        out.labels[r] = c;
        for (Eigen::Index j = 0; j < out.data.cols(); ++j)
            out.data(static_cast<Eigen::Index>(r), j) = out.centers(c, j) + noise * normal(rng);
    }
    return out;
}

Matrix add_noise(const Matrix& x, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += sigma * normal(rng);
    return out;
}

std::shared_ptr<const ActivationDataset> to_dataset(const Matrix& rows, const std::vector<std::uint32_t>& labels,
                                                    std::size_t n_classes, const std::string& notes) {
    DatasetMeta meta;
    meta.source_model = "synthetic";
    meta.layer_tag = "none";
    meta.n_classes = static_cast<std::uint32_t>(n_classes);
    meta.notes = notes;
    std::optional<std::vector<std::uint32_t>> lab;
    if (!labels.empty()) lab = labels;
    return ActivationDataset::from_matrix(rows, std::move(lab), std::move(meta));
}

}  // namespace saelab::synthetic
