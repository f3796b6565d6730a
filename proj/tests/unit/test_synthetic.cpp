#include <doctest.h>

#include <algorithm>
#include <set>

#include <Eigen/QR>

#include "saelab/errors.hpp"
#include "saelab/ontology.hpp"
#include "saelab/synthetic.hpp"

using namespace saelab;

TEST_SUITE("synthetic") {

TEST_CASE("gaussian rows are seeded and roughly standard") {
    const Matrix a = synthetic::gaussian(4000, 3, 1, 2.0);
    CHECK(a == synthetic::gaussian(4000, 3, 1, 2.0));
    CHECK(a != synthetic::gaussian(4000, 3, 2, 2.0));
    const DatasetStats s = dataset_stats(DatasetView::all(synthetic::to_dataset(a, {}, 0, "g")));
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::fabs(s.mean(j)) < 0.15);
        CHECK(std::fabs(s.stddev(j) - 2.0) < 0.1);
    }
    CHECK_THROWS_AS(synthetic::gaussian(0, 3, 1), InvalidArgument);
}

TEST_CASE("sparse dictionary rows are nonnegative combinations of distinct unit atoms") {
    const auto sd = synthetic::sparse_dictionary(500, 8, 20, 3, 4);
    CHECK(sd.atoms.rows() == 20);
    for (Eigen::Index i = 0; i < sd.atoms.rows(); ++i) CHECK(std::fabs(sd.atoms.row(i).norm() - 1.0) < 1e-12);
    REQUIRE(sd.active.size() == 500);
    for (std::size_t r = 0; r < 500; ++r) {
        const auto& act = sd.active[r];
        CHECK(std::set<std::size_t>(act.begin(), act.end()).size() == 3);
        // Least squares on the active atoms recovers coefficients within the generating range.
        Matrix basis(8, 3);
        for (int i = 0; i < 3; ++i) basis.col(i) = sd.atoms.row(static_cast<Eigen::Index>(act[i])).transpose();
        const Vector coef = basis.colPivHouseholderQr().solve(sd.data.row(static_cast<Eigen::Index>(r)).transpose());
        CHECK(coef.minCoeff() >= 0.5 - 1e-9);
        CHECK(coef.maxCoeff() <= 2.0 + 1e-9);
    }
    CHECK(sd.labels.empty());
    CHECK_THROWS_AS(synthetic::sparse_dictionary(10, 8, 4, 5, 0), InvalidArgument);
    CHECK_THROWS_AS(synthetic::sparse_dictionary(10, 8, 4, 2, 0, 2.0, 1.0), InvalidArgument);
}

TEST_CASE("clustered dictionary layout and hierarchy agree") {
    synthetic::ClusterLayout layout;
    const auto sd = synthetic::clustered_dictionary(300, 16, layout, 5);
    CHECK(sd.n_classes == 32);
    CHECK(sd.atoms.rows() == 64);
    REQUIRE(sd.labels.size() == 300);
    for (std::size_t r = 0; r < 300; ++r) {
        const std::size_t c = sd.labels[r];
        REQUIRE(sd.active[r].size() == 3);
        CHECK(sd.active[r][0] == c / layout.classes_per_group);
        CHECK(sd.active[r][1] == layout.groups + c);
        CHECK(sd.active[r][2] >= layout.groups + layout.n_classes());
    }
    const Hierarchy h = Hierarchy::from_json(synthetic::cluster_hierarchy(layout));
    CHECK(h.n_leaves() == 32);
    CHECK(h.size() == 1 + 8 + 32);
    CHECK(h.id(h.leaf_node(5)) == "c5");
    CHECK(h.id(lch(h, {4, 5, 6, 7})) == "g1");
    CHECK(coverage(h, {4, 5, 6, 7}) == 1.0);
    CHECK(lch_height(h, {0, 31}) == 2.0);
}

TEST_CASE("blobs and noise") {
    const auto b = synthetic::blobs(90, 4, 3, 5.0, 0.1, 6);
    CHECK(b.data.rows() == 90);
    CHECK(b.centers.rows() == 3);
    for (std::size_t r = 0; r < 90; ++r) {
        CHECK(b.labels[r] == r % 3);
        CHECK((b.data.row(static_cast<Eigen::Index>(r)) - b.centers.row(b.labels[r])).norm() < 1.0);
    }
    const Matrix noisy = synthetic::add_noise(b.data, 0.0, 1);
    CHECK(noisy == b.data);
    CHECK(synthetic::add_noise(b.data, 1.0, 1) == synthetic::add_noise(b.data, 1.0, 1));
}

TEST_CASE("to_dataset carries labels and metadata") {
    const auto b = synthetic::blobs(12, 2, 4, 1.0, 1.0, 7);
    const auto ds = synthetic::to_dataset(b.data, b.labels, 4, "blobs");
    CHECK(ds->n_samples() == 12);
    CHECK(ds->has_labels());
    CHECK(ds->n_classes() == 4);
    CHECK(ds->meta().notes == "blobs");
    CHECK(ds->labels() == b.labels);
    CHECK_FALSE(synthetic::to_dataset(b.data, {}, 0, "x")->has_labels());
}

}  // TEST_SUITE
