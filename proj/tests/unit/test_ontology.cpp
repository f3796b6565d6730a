#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scratch.hpp"
#include "saelab/errors.hpp"
#include "saelab/ontology.hpp"
#include "saelab/synthetic.hpp"

using namespace saelab;
using nlohmann::json;

namespace {

// root{h1{a,b}, h2{c,d}}; classes a=0, b=1, c=2, d=3.
Hierarchy toy() { return Hierarchy::from_json(synthetic::toy_hierarchy()); }

// Brace lists of string pairs would otherwise deduce to a JSON object.
json edges(std::initializer_list<std::pair<const char*, const char*>> pairs) {
    json out = json::array();
    for (const auto& [child, parent] : pairs) out.push_back(json::array({child, parent}));
    return out;
}

std::string load_error(const json& j) {
    try {
        Hierarchy::from_json(j);
    } catch (const FormatError& e) {
        return e.what();
    }
    return {};
}

// One-hot rows: row i is e_{i % n_classes}, labeled i % n_classes.
DatasetView one_hot_view(std::size_t n_classes, std::size_t per_class) {
    const auto rows = static_cast<Eigen::Index>(n_classes * per_class);
    Matrix x = Matrix::Zero(rows, static_cast<Eigen::Index>(n_classes));
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(rows));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto c = static_cast<Eigen::Index>(r % static_cast<Eigen::Index>(n_classes));
        x(r, c) = 1.0;
        labels[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(c);
    }
    return DatasetView::all(synthetic::to_dataset(x, labels, n_classes, "one-hot"));
}

FeatureClassSet set_of(std::size_t feature, std::vector<std::size_t> classes) {
    FeatureClassSet s;
    s.feature = feature;
    s.classes = std::move(classes);
    return s;
}

}  // namespace

TEST_SUITE("ontology") {

TEST_CASE("toy tree loads with the expected leaf sets") {
    const Hierarchy h = toy();
    CHECK(h.size() == 7);
    CHECK(h.n_leaves() == 4);
    REQUIRE(h.roots().size() == 1);
    CHECK(h.id(h.roots()[0]) == "root");
    CHECK(h.leaf_set(h.node_index("root")).count() == 4);
    CHECK(leaf_set(h, "root") == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(leaf_set(h, "h1") == std::vector<std::string>{"a", "b"});
    CHECK(leaf_set(h, "c") == std::vector<std::string>{"c"});
    CHECK_THROWS_AS(leaf_set(h, "zzz"), InvalidArgument);
    CHECK(h.class_of(h.node_index("d")) == 3u);
    CHECK_FALSE(h.class_of(h.node_index("h2")).has_value());
}

TEST_CASE("toy tree lch, height and coverage") {
    const Hierarchy h = toy();
    CHECK(h.id(lch(h, {0, 1})) == "h1");
    CHECK(h.id(lch(h, {0, 2})) == "root");
    CHECK(h.id(lch(h, {2})) == "c");
    CHECK(lch_height(h, {2}) == 0.0);
    CHECK(lch_height(h, {0, 1}) == 1.0);
    CHECK(lch_height(h, {0, 2}) == 2.0);
    CHECK(coverage(h, {3}) == 1.0);
    CHECK(coverage(h, {0, 1}) == 1.0);
    CHECK(coverage(h, {0, 2}) == 0.5);
    CHECK(coverage(h, {0, 1, 2}) == 0.75);
    CHECK_THROWS_AS(lch(h, {}), InvalidArgument);
    CHECK_THROWS_AS(lch(h, {4}), InvalidArgument);
}

TEST_CASE("loader rejects malformed hierarchies") {
    const json base = synthetic::toy_hierarchy();

    json cyc = {{"nodes", {{{"id", "a"}}, {{"id", "b"}}, {{"id", "x"}}}},
                {"edges", edges({{"x", "a"}, {"a", "b"}, {"b", "a"}})},
                {"leaves", {"x"}}};
    CHECK(load_error(cyc).find("cycle") != std::string::npos);

    json self = base;
    self["edges"].push_back({"h1", "h1"});
    CHECK(load_error(self).find("cycle") != std::string::npos);

    json unknown = base;
    unknown["edges"].push_back({"a", "nowhere"});
    CHECK(load_error(unknown).find("unknown id 'nowhere'") != std::string::npos);

    json orphan = base;
    orphan["nodes"].push_back({{"id", "e"}});
    orphan["leaves"].push_back("e");
    CHECK(load_error(orphan).find("orphan leaf 'e'") != std::string::npos);

    json stray = base;
    stray["nodes"].push_back({{"id", "stray"}});
    stray["edges"].push_back({"stray", "root"});
    CHECK_FALSE(load_error(stray).empty());

    json dup = base;
    dup["nodes"].push_back({{"id", "a"}});
    CHECK(load_error(dup).find("duplicate") != std::string::npos);

    json dup_leaf = base;
    dup_leaf["leaves"].push_back("a");
    CHECK(load_error(dup_leaf).find("duplicate leaf") != std::string::npos);

    CHECK_FALSE(load_error(json::array()).empty());
    CHECK_FALSE(load_error({{"nodes", json::array()}, {"edges", json::array()}, {"leaves", json::array()}}).empty());
}

TEST_CASE("a leaf with two parents keeps both ancestries") {
    json j = synthetic::toy_hierarchy();
    j["edges"].push_back({"b", "h2"});
    const Hierarchy h = Hierarchy::from_json(j);
    const std::size_t b = h.node_index("b");
    CHECK(h.parents(b).size() == 2);
    CHECK(leaf_set(h, "h2") == std::vector<std::string>{"b", "c", "d"});
    CHECK(h.ancestors_or_self(b).test(h.node_index("h1")));
    CHECK(h.ancestors_or_self(b).test(h.node_index("h2")));
    CHECK(h.id(lch(h, {1, 2})) == "h2");
    CHECK(coverage(h, {1, 2}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("forest without a shared root has no common ancestor") {
    json j = {{"nodes", {{{"id", "r1"}}, {{"id", "r2"}}, {{"id", "a"}}, {{"id", "b"}}}},
              {"edges", edges({{"a", "r1"}, {"b", "r2"}})},
              {"leaves", {"a", "b"}}};
    const Hierarchy h = Hierarchy::from_json(j);
    CHECK(h.roots().size() == 2);
    CHECK_THROWS_AS(lch(h, {0, 1}), InvalidArgument);
    CHECK(h.id(lch(h, {1})) == "b");
}

TEST_CASE("equal leaf sets tie-break to the smallest id") {
    // z sits above m and both cover exactly {x, y}.
    json j = {{"nodes", {{{"id", "z"}}, {{"id", "m"}}, {{"id", "x"}}, {{"id", "y"}}}},
              {"edges", edges({{"x", "m"}, {"y", "m"}, {"m", "z"}})},
              {"leaves", {"x", "y"}}};
    const Hierarchy h = Hierarchy::from_json(j);
    CHECK(h.id(lch(h, {0, 1})) == "m");
    json k = {{"nodes", {{{"id", "b2"}}, {{"id", "a2"}}, {{"id", "x"}}, {{"id", "y"}}}},
              {"edges", edges({{"x", "b2"}, {"y", "b2"}, {"b2", "a2"}})},
              {"leaves", {"x", "y"}}};
    const Hierarchy g = Hierarchy::from_json(k);
    CHECK(g.id(lch(g, {0, 1})) == "a2");
    CHECK(lch_height(g, {0, 1}) == 2.0);
}

TEST_CASE("lch, height and coverage match brute force on random DAGs") {
    std::mt19937_64 rng(20240611);
    std::size_t compared = 0, mismatches = 0, no_common = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const oracle::RefDag dag = oracle::random_dag(rng, 200, 50);
        const Hierarchy h = Hierarchy::from_json(oracle::to_json(dag));
        const auto sets = oracle::leaf_sets(dag);
        std::uniform_int_distribution<std::size_t> pick(0, dag.leaves.size() - 1);
        std::uniform_int_distribution<std::size_t> size(1, std::min<std::size_t>(6, dag.leaves.size()));
        for (int q = 0; q < 20; ++q) {
            std::vector<std::size_t> classes;
            const std::size_t want = size(rng);
            while (classes.size() < want) {
                const std::size_t c = pick(rng);
                if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
            }
            std::sort(classes.begin(), classes.end());
            const std::size_t ref = oracle::lch(dag, sets, classes);
            if (ref == SIZE_MAX) {
                ++no_common;
                CHECK_THROWS_AS(lch(h, classes), InvalidArgument);
                continue;
            }
            ++compared;
            double ref_height = 0.0;
            for (auto c : classes) ref_height += static_cast<double>(oracle::up_distance(dag, dag.leaves[c], ref));
            ref_height /= static_cast<double>(classes.size());
            const double ref_cov = static_cast<double>(classes.size()) / static_cast<double>(sets[ref].size());
            const std::size_t got = lch(h, classes);
            if (h.id(got) != dag.ids[ref] || lch_height(h, classes) != ref_height || coverage(h, classes) != ref_cov) {
                ++mismatches;
            }
        }
    }
    CHECK(mismatches == 0);
    CHECK(compared > 1000);
    MESSAGE("compared ", compared, " queries, ", no_common, " without a common ancestor");
}

TEST_CASE("adding a class never shrinks the lch leaf set; full leaf sets have coverage 1") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const oracle::RefDag dag = oracle::random_dag(rng, 120, 30);
        const Hierarchy h = Hierarchy::from_json(oracle::to_json(dag));
        std::vector<std::size_t> classes;
        std::size_t prev = 0;
        for (std::size_t c = 0; c < h.n_leaves(); ++c) {
            classes.push_back(c);
            std::size_t node;
            try {
                node = lch(h, classes);
            } catch (const InvalidArgument&) {
                break;
            }
            const std::size_t size = h.leaf_set(node).count();
            CHECK(size >= prev);
            prev = size;
        }
        for (std::size_t node = 0; node < h.size(); ++node) {
            std::vector<std::size_t> full;
            const auto& ls = h.leaf_set(node);
            for (auto c = ls.find_first(); c != LeafSet::npos; c = ls.find_next(c)) full.push_back(c);
            CHECK(coverage(h, full) == 1.0);
        }
    }
}

TEST_CASE("lch ties are deterministic across repeated queries") {
    std::mt19937_64 rng(8);
    const oracle::RefDag dag = oracle::random_dag(rng, 150, 40);
    const Hierarchy h1 = Hierarchy::from_json(oracle::to_json(dag));
    const Hierarchy h2 = Hierarchy::from_json(oracle::to_json(dag));
    for (std::size_t c = 0; c + 1 < h1.n_leaves(); ++c) {
        std::vector<std::size_t> pair{c, c + 1};
        try {
            CHECK(h1.id(lch(h1, pair)) == h2.id(lch(h2, pair)));
        } catch (const InvalidArgument&) {
            CHECK_THROWS_AS(lch(h2, pair), InvalidArgument);
        }
    }
}

TEST_CASE("hierarchy load from file") {
    auto dir = testutil::scratch_dir("ontology_load");
    {
        std::ofstream out(dir / "toy.json");
        out << synthetic::toy_hierarchy().dump();
    }
    CHECK(Hierarchy::load(dir / "toy.json").n_leaves() == 4);
    {
        std::ofstream out(dir / "bad.json");
        out << "{not json";
    }
    CHECK_THROWS_AS(Hierarchy::load(dir / "bad.json"), FormatError);
    CHECK_THROWS_AS(Hierarchy::load(dir / "missing.json"), IoError);
}

TEST_CASE("activated_classes examples") {
    const DatasetView view = one_hot_view(4, 10);
    SUBCASE("fires on all class-0 rows only") {
        auto enc = [](const Matrix& x) -> Matrix { return x.col(0); };
        const auto sets = activated_classes(enc, 1, view, 4, 0.5);
        REQUIRE(sets.size() == 1);
        CHECK(sets[0].classes == std::vector<std::size_t>{0});
        CHECK(sets[0].rates == std::vector<double>{1.0, 0.0, 0.0, 0.0});
    }
    SUBCASE("fires on 40% of every class") {
        // Rows of each class come in order, so the row index within a class is r / 4.
        auto enc = [](const Matrix& x) -> Matrix {
            Matrix z = Matrix::Zero(x.rows(), 1);
            for (Eigen::Index r = 0; r < x.rows(); ++r) z(r, 0) = (r / 4) % 10 < 4 ? 1.0 : 0.0;
            return z;
        };
        const auto sets = activated_classes(enc, 1, view, 4, 0.5);
        CHECK(sets[0].inactive());
        CHECK(sets[0].rates[2] == doctest::Approx(0.4));
    }
    SUBCASE("constructed relu SAE fires on classes 2 and 5") {
        const DatasetView eight = one_hot_view(8, 5);
        SaeArchitecture arch = SaeArchitecture::relu(0.0);
        SaeParams p = init_params(arch, 8, 1, 0);
        p.W_enc.setZero();
        p.b_enc.setConstant(-0.5);
        p.W_enc(3, 2) = 1.0;
        p.W_enc(3, 5) = 1.0;
        const auto sets = activated_classes(p, arch, eight, 0.5);
        REQUIRE(sets.size() == 8);
        CHECK(sets[3].classes == std::vector<std::size_t>{2, 5});
        for (std::size_t k = 0; k < 8; ++k) {
            if (k != 3) CHECK(sets[k].inactive());
        }
    }
    SUBCASE("errors") {
        auto enc = [](const Matrix& x) -> Matrix { return x; };
        const DatasetView unlabeled = DatasetView::all(synthetic::to_dataset(Matrix::Ones(3, 2), {}, 0, "u"));
        CHECK_THROWS_AS(activated_classes(enc, 2, unlabeled, 2, 0.5), InvalidArgument);
        CHECK_THROWS_AS(activated_classes(enc, 4, view, 4, 0.0), InvalidArgument);
        CHECK_THROWS_AS(activated_classes(enc, 4, view, 4, 1.5), InvalidArgument);
    }
}

TEST_CASE("ontology_report examples") {
    const Hierarchy h = toy();
    SUBCASE("one full subtree and one half root") {
        const auto rep = ontology_report({set_of(0, {0, 1}), set_of(1, {0, 2}), set_of(2, {})}, h);
        CHECK(rep.thresholds == std::vector<double>{0.99, 0.75});
        CHECK(rep.counts_above == std::vector<std::size_t>{1, 1});
        CHECK(rep.multi_class == 2);
        CHECK(rep.inactive == 1);
        CHECK(rep.n_features == 3);
        REQUIRE(rep.rows.size() == 2);
        CHECK(rep.rows[0].lch_id == "h1");
        CHECK(rep.rows[1].lch_id == "root");
        CHECK(rep.rows[1].coverage == 0.5);
        CHECK(rep.rows[1].lch_height == 2.0);
    }
    SUBCASE("single-class features are excluded from threshold counts") {
        const auto rep = ontology_report({set_of(0, {0}), set_of(1, {1}), set_of(2, {3})}, h);
        CHECK(rep.counts_above == std::vector<std::size_t>{0, 0});
        CHECK(rep.raw_counts_above == std::vector<std::size_t>{3, 3});
        CHECK(rep.single_class == 3);
        CHECK(rep.n_features == 3);
        for (const auto& r : rep.rows) {
            CHECK(r.single_class);
            CHECK(r.coverage == 1.0);
        }
    }
    SUBCASE("coverage exactly at a threshold is not counted") {
        const auto rep = ontology_report({set_of(0, {0, 1, 2})}, h, {0.75, 0.5});
        CHECK(rep.counts_above == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("csv and summary") {
        auto dir = testutil::scratch_dir("ontology_csv");
        const auto rep = ontology_report({set_of(4, {0, 2}), set_of(7, {3})}, h);
        rep.write_csv(dir / "o.csv");
        std::ifstream in(dir / "o.csv");
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str() ==
              "feature,k_classes,lch_id,lch_height,coverage,single_class\n"
              "4,2,root,2.000000,0.500000,0\n"
              "7,1,d,0.000000,1.000000,1\n");
        const json s = rep.summary_json();
        CHECK(s["n_features"] == 2);
        CHECK(s["coverage_counts"][0]["threshold"] == 0.99);
        CHECK(s["coverage_counts"][0]["multi_class_count"] == 0);
        CHECK(s["coverage_counts"][0]["raw_count"] == 1);
    }
}

TEST_CASE("features without a common ancestor are counted and skipped") {
    json j = {{"nodes", {{{"id", "r1"}}, {{"id", "r2"}}, {{"id", "a"}}, {{"id", "b"}}}},
              {"edges", edges({{"a", "r1"}, {"b", "r2"}})},
              {"leaves", {"a", "b"}}};
    const Hierarchy h = Hierarchy::from_json(j);
    const auto rep = ontology_report({set_of(0, {0, 1}), set_of(1, {0})}, h);
    CHECK(rep.no_common_ancestor == 1);
    CHECK(rep.rows.size() == 1);
    CHECK(rep.multi_class == 0);
}

TEST_CASE("baselines") {
    const Hierarchy h = toy();
    const DatasetView view = one_hot_view(4, 25);
    SUBCASE("random baseline is seed-deterministic") {
        const auto a = random_baseline(4, 32, view, h, 0.5, 3);
        const auto b = random_baseline(4, 32, view, h, 0.5, 3);
        CHECK(a.summary_json() == b.summary_json());
        CHECK(a.n_features == 32);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].feature == b.rows[i].feature);
            CHECK(a.rows[i].lch_id == b.rows[i].lch_id);
        }
    }
    SUBCASE("n = 0 gives an empty report") {
        const auto rep = random_baseline(4, 0, view, h, 0.5, 3);
        CHECK(rep.rows.empty());
        CHECK(rep.n_features == 0);
        CHECK(rep.counts_above == std::vector<std::size_t>{0, 0});
    }
    SUBCASE("dimension mismatch") { CHECK_THROWS_AS(random_baseline(5, 3, view, h, 0.5, 3), InvalidArgument); }
    SUBCASE("raw neurons on one-hot data are single-class") {
        const auto rep = raw_neuron_baseline(view, h, 0.5);
        CHECK(rep.n_features == 4);
        CHECK(rep.single_class == 4);
        CHECK(rep.counts_above == std::vector<std::size_t>{0, 0});
    }
}

}  // TEST_SUITE
