#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/dynamic_bitset.hpp>
#include <json.hpp>

#include "saelab/activation_store.hpp"
#include "saelab/sae.hpp"

namespace saelab {

/// Bitset over class indices (positions in Hierarchy::leaves()).
using LeafSet = boost::dynamic_bitset<>;

/// Rooted DAG of synsets with child -> parent (hypernym) edges and a designated
/// leaf set. Class index c corresponds to the c-th entry of the "leaves" list.
class Hierarchy {
public:
    /// Schema: {"nodes": [{"id", "name"}], "edges": [["child", "parent"]], "leaves": ["id", ...]}.
    static Hierarchy from_json(const nlohmann::json& j);
    static Hierarchy load(const std::filesystem::path& path);

    std::size_t size() const { return ids_.size(); }
    std::size_t n_leaves() const { return leaf_nodes_.size(); }
    const std::string& id(std::size_t node) const { return ids_.at(node); }
    const std::string& name(std::size_t node) const { return names_.at(node); }
    std::optional<std::size_t> find(std::string_view id) const;
    /// Throws InvalidArgument for unknown ids.
    std::size_t node_index(std::string_view id) const;

    const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }
    const std::vector<std::size_t>& children(std::size_t node) const { return children_.at(node); }
    std::vector<std::size_t> roots() const;

    /// Node index of class c.
    std::size_t leaf_node(std::size_t class_index) const { return leaf_nodes_.at(class_index); }
    std::optional<std::size_t> class_of(std::size_t node) const;

    /// L(node): classes with a hypernym path to node, including node itself when it is a leaf.
    const LeafSet& leaf_set(std::size_t node) const { return leaf_sets_.at(node); }
    /// Nodes that are ancestors of `node` or `node` itself, as a bitset over node indices.
    const boost::dynamic_bitset<>& ancestors_or_self(std::size_t node) const { return ancestors_.at(node); }

    /// Length of the shortest hypernym path from `from` up to `to`; nullopt if none.
    std::optional<std::size_t> distance_up(std::size_t from, std::size_t to) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> leaf_nodes_;
    std::vector<std::int64_t> class_of_;
    std::vector<LeafSet> leaf_sets_;
    std::vector<boost::dynamic_bitset<>> ancestors_;
};

/// Leaf ids under `node_id`.
std::vector<std::string> leaf_set(const Hierarchy& h, std::string_view node_id);

/// Lowest common hypernym: the common ancestor-or-self minimizing |L|, ties to
/// the lexicographically smallest id. `classes` are class indices.
std::size_t lch(const Hierarchy& h, const std::vector<std::size_t>& classes);
/// Mean shortest-path distance from each class to lch(classes).
double lch_height(const Hierarchy& h, const std::vector<std::size_t>& classes);
/// |C| / |L(lch(C))|.
double coverage(const Hierarchy& h, const std::vector<std::size_t>& classes);

struct FeatureClassSet {
    std::size_t feature = 0;
    std::vector<std::size_t> classes;  // C_k, ascending class indices
    std::vector<double> rates;         // firing rate per class, indexed by class
    bool inactive() const { return classes.empty(); }
};

/// Maps a batch of input rows to feature activations (rows x features).
using FeatureEncoder = std::function<Matrix(const Matrix&)>;

/// C_k = {c : fraction of class-c rows with z_k > 0 >= rate_threshold}.
std::vector<FeatureClassSet> activated_classes(const FeatureEncoder& encoder, std::size_t n_features,
                                               const DatasetView& labeled, std::size_t n_classes,
                                               double rate_threshold = 0.5);
std::vector<FeatureClassSet> activated_classes(const SaeParams& params, const SaeArchitecture& arch,
                                               const DatasetView& labeled, double rate_threshold = 0.5);

struct OntologyRow {
    std::size_t feature = 0;
    std::size_t k_classes = 0;
    std::string lch_id;
    double lch_height = 0.0;
    double coverage = 0.0;
    bool single_class = false;
};

struct OntologyReport {
    std::vector<OntologyRow> rows;       // active features only
    std::vector<double> thresholds;
    std::vector<std::size_t> counts_above;  // multi-class features with coverage > threshold
    std::vector<std::size_t> raw_counts_above;  // same, single-class features included
    std::size_t n_features = 0;
    std::size_t inactive = 0;
    std::size_t single_class = 0;
    std::size_t multi_class = 0;
    std::size_t no_common_ancestor = 0;

    void write_csv(const std::filesystem::path& path) const;
    nlohmann::json summary_json() const;
};

OntologyReport ontology_report(const std::vector<FeatureClassSet>& sets, const Hierarchy& h,
                               std::vector<double> thresholds = {0.99, 0.75});

/// Random-vector baseline: n Gaussian unit directions in R^d, z_k = max(0, dir_k . x).
OntologyReport random_baseline(std::size_t d, std::size_t n, const DatasetView& labeled, const Hierarchy& h,
                               double rate_threshold, std::uint64_t seed,
                               std::vector<double> thresholds = {0.99, 0.75});

/// Raw-neuron baseline: z_k = max(0, x_k) on the input coordinates.
OntologyReport raw_neuron_baseline(const DatasetView& labeled, const Hierarchy& h, double rate_threshold,
                                   std::vector<double> thresholds = {0.99, 0.75});

}  // namespace saelab
