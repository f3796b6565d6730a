#include "saelab/ontology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>

#include <fmt/core.h>

#include "saelab/errors.hpp"

namespace saelab {

using nlohmann::json;

Hierarchy Hierarchy::from_json(const json& j) {
    if (!j.is_object()) throw FormatError(FormatErrc::BadMetadata, "hierarchy: expected a JSON object");
    for (const char* key : {"nodes", "edges", "leaves"}) {
        if (!j.contains(key) || !j.at(key).is_array())
            throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: '{}' must be an array", key));
    }

    Hierarchy h;
    for (const auto& node : j.at("nodes")) {
        if (!node.is_object() || !node.contains("id") || !node.at("id").is_string())
            throw FormatError(FormatErrc::BadMetadata, "hierarchy: every node needs a string 'id'");
        std::string id = node.at("id").get<std::string>();
        std::string name = node.value("name", id);
        if (h.index_.count(id)) throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: duplicate node id '{}'", id));
        h.index_.emplace(id, h.ids_.size());
        h.ids_.push_back(std::move(id));
        h.names_.push_back(std::move(name));
    }
    const std::size_t n = h.ids_.size();
    if (n == 0) throw FormatError(FormatErrc::BadMetadata, "hierarchy: no nodes");
    h.parents_.assign(n, {});
    h.children_.assign(n, {});

    auto lookup = [&](const json& v, const char* what) {
        if (!v.is_string()) throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: {} must be a string id", what));
        auto s = v.get<std::string>();
        auto it = h.index_.find(s);
        if (it == h.index_.end()) throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: unknown id '{}' in {}", s, what));
        return it->second;
    };

    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2)
            throw FormatError(FormatErrc::BadMetadata, "hierarchy: edges must be [child, parent] pairs");
        std::size_t child = lookup(e[0], "edges");
        std::size_t parent = lookup(e[1], "edges");
        if (child == parent) throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: cycle detected at '{}'", h.ids_[child]));
        auto& ps = h.parents_[child];
        if (std::find(ps.begin(), ps.end(), parent) != ps.end()) continue;
        ps.push_back(parent);
        h.children_[parent].push_back(child);
    }

    h.class_of_.assign(n, -1);
    for (const auto& leaf : j.at("leaves")) {
        std::size_t node = lookup(leaf, "leaves");
        if (h.class_of_[node] >= 0)
            throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: duplicate leaf '{}'", h.ids_[node]));
        h.class_of_[node] = static_cast<std::int64_t>(h.leaf_nodes_.size());
        h.leaf_nodes_.push_back(node);
    }
    if (h.leaf_nodes_.empty()) throw FormatError(FormatErrc::BadMetadata, "hierarchy: no leaves");
    if (n > 1) {
        for (std::size_t node : h.leaf_nodes_)
            if (h.parents_[node].empty())
                throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: orphan leaf '{}'", h.ids_[node]));
    }

    // Kahn's algorithm on child -> parent edges: children come out before parents.
    std::vector<std::size_t> pending(n, 0);
    for (std::size_t v = 0; v < n; ++v) pending[v] = h.children_[v].size();
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t v = 0; v < n; ++v)
        if (pending[v] == 0) order.push_back(v);
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t p : h.parents_[order[i]])
            if (--pending[p] == 0) order.push_back(p);
    }
    if (order.size() != n) {
        for (std::size_t v = 0; v < n; ++v)
            if (pending[v] > 0)
                throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy: cycle detected involving '{}'", h.ids_[v]));
    }

    const std::size_t m = h.leaf_nodes_.size();
    h.leaf_sets_.assign(n, LeafSet(m));
    for (std::size_t v : order) {
        if (h.class_of_[v] >= 0) h.leaf_sets_[v].set(static_cast<std::size_t>(h.class_of_[v]));
        for (std::size_t p : h.parents_[v]) h.leaf_sets_[p] |= h.leaf_sets_[v];
    }
    for (std::size_t v = 0; v < n; ++v)
        if (h.leaf_sets_[v].none())
            throw FormatError(FormatErrc::BadMetadata,
                              fmt::format("hierarchy: node '{}' is not an ancestor of any leaf", h.ids_[v]));

    h.ancestors_.assign(n, boost::dynamic_bitset<>(n));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        std::size_t v = *it;
        h.ancestors_[v].set(v);
        for (std::size_t p : h.parents_[v]) h.ancestors_[v] |= h.ancestors_[p];
    }
    return h;
}

Hierarchy Hierarchy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open hierarchy '{}'", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(FormatErrc::BadMetadata, fmt::format("hierarchy '{}': {}", path.string(), e.what()));
    }
    return from_json(j);
}

std::optional<std::size_t> Hierarchy::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Hierarchy::node_index(std::string_view id) const {
    auto idx = find(id);
    if (!idx) throw InvalidArgument(fmt::format("unknown node '{}'", id));
    return *idx;
}

std::vector<std::size_t> Hierarchy::roots() const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < size(); ++v)
        if (parents_[v].empty()) out.push_back(v);
    return out;
}

std::optional<std::size_t> Hierarchy::class_of(std::size_t node) const {
    if (class_of_.at(node) < 0) return std::nullopt;
    return static_cast<std::size_t>(class_of_[node]);
}

std::optional<std::size_t> Hierarchy::distance_up(std::size_t from, std::size_t to) const {
    if (from == to) return 0;
    if (!ancestors_.at(from).test(to)) return std::nullopt;
    std::vector<std::size_t> dist(size(), SIZE_MAX);
    std::deque<std::size_t> queue{from};
    dist[from] = 0;
    while (!queue.empty()) {
        std::size_t v = queue.front();
        queue.pop_front();
        for (std::size_t p : parents_[v]) {
            if (dist[p] != SIZE_MAX) continue;
            dist[p] = dist[v] + 1;
            if (p == to) return dist[p];
            queue.push_back(p);
        }
    }
    return std::nullopt;
}

std::vector<std::string> leaf_set(const Hierarchy& h, std::string_view node_id) {
    const LeafSet& bits = h.leaf_set(h.node_index(node_id));
    std::vector<std::string> out;
    for (auto c = bits.find_first(); c != LeafSet::npos; c = bits.find_next(c)) out.push_back(h.id(h.leaf_node(c)));
    return out;
}

std::size_t lch(const Hierarchy& h, const std::vector<std::size_t>& classes) {
    if (classes.empty()) throw InvalidArgument("lch: class set is empty");
    boost::dynamic_bitset<> common;
    for (std::size_t c : classes) {
        if (c >= h.n_leaves()) throw InvalidArgument(fmt::format("lch: class {} out of range [0, {})", c, h.n_leaves()));
        const auto& anc = h.ancestors_or_self(h.leaf_node(c));
        if (common.empty())
            common = anc;
        else
            common &= anc;
    }
    std::size_t best = SIZE_MAX;
    std::size_t best_size = SIZE_MAX;
    for (auto v = common.find_first(); v != boost::dynamic_bitset<>::npos; v = common.find_next(v)) {
        std::size_t size = h.leaf_set(v).count();
        if (size < best_size || (size == best_size && h.id(v) < h.id(best))) {
            best = v;
            best_size = size;
        }
    }
    if (best == SIZE_MAX) throw InvalidArgument("lch: classes share no common ancestor");
    return best;
}

double lch_height(const Hierarchy& h, const std::vector<std::size_t>& classes) {
    std::size_t top = lch(h, classes);
    double total = 0.0;
    for (std::size_t c : classes) total += static_cast<double>(*h.distance_up(h.leaf_node(c), top));
    return total / static_cast<double>(classes.size());
}

double coverage(const Hierarchy& h, const std::vector<std::size_t>& classes) {
    std::size_t top = lch(h, classes);
    std::vector<std::size_t> unique(classes);
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    return static_cast<double>(unique.size()) / static_cast<double>(h.leaf_set(top).count());
}

std::vector<FeatureClassSet> activated_classes(const FeatureEncoder& encoder, std::size_t n_features,
                                               const DatasetView& labeled, std::size_t n_classes,
                                               double rate_threshold) {
    if (!labeled.data || !labeled.data->has_labels())
        throw InvalidArgument("activated_classes: dataset is unlabeled");
    if (!(rate_threshold > 0.0 && rate_threshold <= 1.0))
        throw InvalidArgument(fmt::format("activated_classes: rate_threshold must be in (0, 1], got {}", rate_threshold));
    if (n_classes == 0) throw InvalidArgument("activated_classes: n_classes must be >= 1");

    std::vector<std::size_t> class_rows(n_classes, 0);
    Matrix fires = Matrix::Zero(static_cast<Eigen::Index>(n_features), static_cast<Eigen::Index>(n_classes));
    const auto& idx = labeled.indices;
    constexpr std::size_t chunk = 1024;
    Matrix rows;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
        std::size_t stop = std::min(idx.size(), start + chunk);
        std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                      idx.begin() + static_cast<std::ptrdiff_t>(stop));
        labeled.data->gather(part, rows);
        Matrix z = encoder(rows);
        if (static_cast<std::size_t>(z.cols()) != n_features || z.rows() != rows.rows())
            throw InvalidArgument("activated_classes: encoder returned the wrong shape");
        for (std::size_t r = 0; r < part.size(); ++r) {
            std::size_t c = labeled.data->label(part[r]);
            if (c >= n_classes) throw FormatError(FormatErrc::LabelOutOfRange, fmt::format("label {} >= n_classes {}", c, n_classes));
            ++class_rows[c];
            for (std::size_t k = 0; k < n_features; ++k)
                if (z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) > 0.0)
                    fires(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) += 1.0;
        }
    }

    std::vector<FeatureClassSet> out(n_features);
    for (std::size_t k = 0; k < n_features; ++k) {
        auto& set = out[k];
        set.feature = k;
        set.rates.assign(n_classes, 0.0);
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (class_rows[c] == 0) continue;
            double rate = fires(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) / static_cast<double>(class_rows[c]);
            set.rates[c] = rate;
            if (rate >= rate_threshold) set.classes.push_back(c);
        }
    }
    return out;
}

std::vector<FeatureClassSet> activated_classes(const SaeParams& params, const SaeArchitecture& arch,
                                               const DatasetView& labeled, double rate_threshold) {
    if (!labeled.data) throw InvalidArgument("activated_classes: no dataset");
    if (static_cast<std::size_t>(params.d) != labeled.data->dim())
        throw InvalidArgument(fmt::format("activated_classes: model dim {} != dataset dim {}", params.d, labeled.data->dim()));
    std::size_t n_classes = labeled.data->n_classes();
    return activated_classes([&](const Matrix& x) { return encode(params, arch, x); },
                             static_cast<std::size_t>(params.n), labeled, n_classes, rate_threshold);
}

OntologyReport ontology_report(const std::vector<FeatureClassSet>& sets, const Hierarchy& h,
                               std::vector<double> thresholds) {
    OntologyReport report;
    report.thresholds = std::move(thresholds);
    report.counts_above.assign(report.thresholds.size(), 0);
    report.raw_counts_above.assign(report.thresholds.size(), 0);
    report.n_features = sets.size();
    for (const auto& set : sets) {
        if (set.inactive()) {
            ++report.inactive;
            continue;
        }
        std::size_t top = 0;
        try {
            top = lch(h, set.classes);
        } catch (const InvalidArgument&) {
            ++report.no_common_ancestor;
            continue;
        }
        OntologyRow row;
        row.feature = set.feature;
        row.k_classes = set.classes.size();
        row.lch_id = h.id(top);
        row.lch_height = lch_height(h, set.classes);
        row.coverage = coverage(h, set.classes);
        row.single_class = row.k_classes == 1;
        if (row.single_class)
            ++report.single_class;
        else
            ++report.multi_class;
        for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
            if (row.coverage > report.thresholds[t]) {
                ++report.raw_counts_above[t];
                if (!row.single_class) ++report.counts_above[t];
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

void OntologyReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    out << "feature,k_classes,lch_id,lch_height,coverage,single_class\n";
    for (const auto& r : rows)
        out << fmt::format("{},{},{},{:.6f},{:.6f},{}\n", r.feature, r.k_classes, r.lch_id, r.lch_height, r.coverage,
                           r.single_class ? 1 : 0);
    if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

json OntologyReport::summary_json() const {
    json counts = json::array();
    for (std::size_t t = 0; t < thresholds.size(); ++t)
        counts.push_back({{"threshold", thresholds[t]},
                          {"multi_class_count", counts_above[t]},
                          {"raw_count", raw_counts_above[t]}});
    return {{"n_features", n_features},
            {"inactive", inactive},
            {"single_class", single_class},
            {"multi_class", multi_class},
            {"no_common_ancestor", no_common_ancestor},
            {"coverage_counts", counts}};
}

OntologyReport random_baseline(std::size_t d, std::size_t n, const DatasetView& labeled, const Hierarchy& h,
                               double rate_threshold, std::uint64_t seed, std::vector<double> thresholds) {
    if (n == 0) {
        OntologyReport empty;
        empty.thresholds = thresholds;
        empty.counts_above.assign(thresholds.size(), 0);
        empty.raw_counts_above.assign(thresholds.size(), 0);
        return empty;
    }
    if (!labeled.data || labeled.data->dim() != d)
        throw InvalidArgument(fmt::format("random_baseline: dataset dim does not match d={}", d));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix dirs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index k = 0; k < dirs.rows(); ++k) {
        do {
            for (Eigen::Index j = 0; j < dirs.cols(); ++j) dirs(k, j) = normal(rng);
        } while (dirs.row(k).norm() == 0.0);
        dirs.row(k).normalize();
    }
    auto sets = activated_classes([&](const Matrix& x) -> Matrix { return (x * dirs.transpose()).cwiseMax(0.0); }, n,
                                  labeled, h.n_leaves(), rate_threshold);
    return ontology_report(sets, h, std::move(thresholds));
}

OntologyReport raw_neuron_baseline(const DatasetView& labeled, const Hierarchy& h, double rate_threshold,
                                   std::vector<double> thresholds) {
    if (!labeled.data) throw InvalidArgument("raw_neuron_baseline: no dataset");
    auto sets = activated_classes([](const Matrix& x) -> Matrix { return x.cwiseMax(0.0); }, labeled.data->dim(),
                                  labeled, h.n_leaves(), rate_threshold);
    return ontology_report(sets, h, std::move(thresholds));
}

}  // namespace saelab
