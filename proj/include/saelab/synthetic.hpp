#pragma once

// Synthetic generators used by the bundled datasets, the CLI `synth` command and
// the acceptance benchmarks.

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "saelab/activation_store.hpp"
#include "saelab/types.hpp"

namespace saelab::synthetic {

/// Rows drawn i.i.d. from N(0, scale^2 I).
Matrix gaussian(std::size_t rows, std::size_t dim, std::uint64_t seed, double scale = 1.0);

struct SparseDictionary {
    Matrix atoms;                            // n_atoms x dim, unit rows
    Matrix data;                             // rows x dim
    std::vector<std::vector<std::size_t>> active;  // atom ids per row
    std::vector<std::uint32_t> labels;       // empty unless structured
    std::size_t n_classes = 0;
};

/// Each row is a nonnegative combination of `active` distinct atoms drawn uniformly,
/// coefficients ~ U(coef_lo, coef_hi). Atoms are Gaussian directions normalized to unit length.
SparseDictionary sparse_dictionary(std::size_t rows, std::size_t dim, std::size_t n_atoms, std::size_t active,
                                   std::uint64_t seed, double coef_lo = 0.5, double coef_hi = 2.0);

/// Labeled variant with classes tied to atom clusters. Atoms are laid out as
/// [group atoms | class atoms | distractor atoms]. A row of class c (in group g)
/// combines the atom of g, the atom of c and one distractor atom.
struct ClusterLayout {
    std::size_t groups = 8;
    std::size_t classes_per_group = 4;
    std::size_t distractors = 24;
    std::size_t n_classes() const { return groups * classes_per_group; }
    std::size_t n_atoms() const { return groups + n_classes() + distractors; }
};
SparseDictionary clustered_dictionary(std::size_t rows, std::size_t dim, const ClusterLayout& layout,
                                      std::uint64_t seed, double coef_lo = 0.5, double coef_hi = 2.0);

/// Three-level hierarchy matching ClusterLayout: root -> g{i} -> c{j}. Class j is leaf "c{j}".
nlohmann::json cluster_hierarchy(const ClusterLayout& layout);

/// Four-leaf binary tree root{h1{a,b}, h2{c,d}}.
nlohmann::json toy_hierarchy();

struct Blobs {
    Matrix data;
    std::vector<std::uint32_t> labels;
    Matrix centers;
};

/// Isotropic Gaussian clusters: centers ~ N(0, separation^2 I), rows = center + N(0, noise^2 I).
Blobs blobs(std::size_t rows, std::size_t dim, std::size_t n_classes, double separation, double noise,
            std::uint64_t seed);
/// Same rows plus N(0, sigma^2 I) noise.
Matrix add_noise(const Matrix& x, double sigma, std::uint64_t seed);

std::shared_ptr<const ActivationDataset> to_dataset(const Matrix& rows, const std::vector<std::uint32_t>& labels,
                                                    std::size_t n_classes, const std::string& notes);

}  // namespace saelab::synthetic
