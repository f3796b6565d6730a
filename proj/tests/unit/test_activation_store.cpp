#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "scratch.hpp"
#include "saelab/activation_store.hpp"
#include "saelab/binary_io.hpp"
#include "saelab/errors.hpp"

using namespace saelab;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) { return io::read_file(p); }

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DatasetMeta meta_with_classes(std::uint32_t c) {
    DatasetMeta m;
    m.source_model = "test";
    m.layer_tag = "l0";
    m.n_classes = c;
    return m;
}

template <typename Fn>
FormatErrc format_code(Fn&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.code();
    }
    FAIL("expected a FormatError");
    return FormatErrc::BadHeader;
}

}  // namespace

TEST_SUITE("activation_store") {

TEST_CASE("2x3 round trip with labels has the documented byte layout") {
    auto dir = testutil::scratch_dir("as_roundtrip");
    Matrix x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    DatasetMeta meta = meta_with_classes(2);
    write_dataset(dir / "a.saeact", x, std::vector<std::uint32_t>{0, 1}, meta);

    const std::size_t meta_len = meta.to_json().dump().size();
    CHECK(std::filesystem::file_size(dir / "a.saeact") == 33 + meta_len + 24 + 8);

    auto ds = ActivationDataset::open(dir / "a.saeact");
    CHECK(ds->n_samples() == 2);
    CHECK(ds->dim() == 3);
    CHECK(ds->has_labels());
    CHECK(ds->n_classes() == 2);
    CHECK(ds->meta().source_model == "test");
    CHECK(ds->to_matrix() == x);
    CHECK(ds->labels() == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("round trip is bit-identical for random finite rows") {
    auto dir = testutil::scratch_dir("as_bits");
    std::mt19937_64 rng(3);
    std::normal_distribution<float> normal(0.0f, 100.0f);
    const std::size_t n = 257, d = 7;
    std::vector<float> rows(n * d);
    for (float& v : rows) v = normal(rng);
    rows[5] = 0.0f;
    rows[6] = -0.0f;
    rows[7] = std::numeric_limits<float>::denorm_min();
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % 5);
    write_dataset(dir / "b.saeact", rows, n, d, labels, meta_with_classes(5));

    auto ds = ActivationDataset::open(dir / "b.saeact");
    std::vector<float> back(d);
    for (std::size_t i = 0; i < n; ++i) {
        ds->read_row(i, back);
        CHECK(std::memcmp(back.data(), rows.data() + i * d, d * sizeof(float)) == 0);
        CHECK(ds->label(i) == labels[i]);
    }
}

TEST_CASE("write rejects empty and non-finite input") {
    auto dir = testutil::scratch_dir("as_write_err");
    std::vector<float> none;
    CHECK_THROWS_WITH_AS(write_dataset(dir / "e.saeact", none, 0, 3, std::nullopt, {}), doctest::Contains("n_samples must be"),
                         InvalidArgument);
    Matrix x = Matrix::Zero(3, 2);
    x(2, 1) = std::nan("");
    CHECK_THROWS_WITH_AS(write_dataset(dir / "n.saeact", x, std::nullopt, {}), doctest::Contains("row 2"),
                         InvalidArgument);
    Matrix big = Matrix::Constant(1, 1, 1e300);
    CHECK_THROWS_AS(write_dataset(dir / "o.saeact", big, std::nullopt, {}), InvalidArgument);
    CHECK_FALSE(std::filesystem::exists(dir / "n.saeact"));
}

TEST_CASE("labels outside n_classes are rejected on write") {
    auto dir = testutil::scratch_dir("as_labels");
    Matrix x = Matrix::Ones(2, 2);
    CHECK_THROWS_AS(write_dataset(dir / "l.saeact", x, std::vector<std::uint32_t>{0, 3}, meta_with_classes(2)),
                    InvalidArgument);
    CHECK_THROWS_AS(write_dataset(dir / "l.saeact", x, std::vector<std::uint32_t>{0}, meta_with_classes(2)),
                    InvalidArgument);
}

TEST_CASE("open validates magic, version, length and contents") {
    auto dir = testutil::scratch_dir("as_open_err");
    Matrix x(2, 2);
    x << 1, 2, 3, 4;
    write_dataset(dir / "ok.saeact", x, std::vector<std::uint32_t>{0, 1}, meta_with_classes(2));
    const auto good = slurp(dir / "ok.saeact");

    SUBCASE("wrong magic") {
        auto bad = good;
        bad[0] = 'X';
        spit(dir / "bad.saeact", bad);
        CHECK_THROWS_WITH(ActivationDataset::open(dir / "bad.saeact"), doctest::Contains("unrecognized format"));
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::UnrecognizedFormat);
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        bad[8] = 9;
        spit(dir / "bad.saeact", bad);
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::UnsupportedVersion);
    }
    SUBCASE("truncated header") {
        spit(dir / "bad.saeact", std::vector<char>(good.begin(), good.begin() + 20));
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::TruncatedHeader);
    }
    SUBCASE("truncated payload reports expected and actual sizes") {
        std::vector<char> bad(good.begin(), good.end() - 5);
        spit(dir / "bad.saeact", bad);
        std::string msg;
        try {
            ActivationDataset::open(dir / "bad.saeact");
        } catch (const FormatError& e) {
            CHECK(e.code() == FormatErrc::TruncatedPayload);
            msg = e.what();
        }
        CHECK(msg.find("truncated payload") != std::string::npos);
        CHECK(msg.find(std::to_string(good.size())) != std::string::npos);
        CHECK(msg.find(std::to_string(bad.size())) != std::string::npos);
    }
    SUBCASE("trailing bytes") {
        auto bad = good;
        bad.push_back(0);
        spit(dir / "bad.saeact", bad);
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::TrailingBytes);
    }
    SUBCASE("non-finite payload") {
        auto bad = good;
        const float inf = std::numeric_limits<float>::infinity();
        std::memcpy(bad.data() + (good.size() - 8 - 4), &inf, 4);
        spit(dir / "bad.saeact", bad);
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::NonFinite);
    }
    SUBCASE("label out of range") {
        auto bad = good;
        const std::uint32_t label = 7;
        std::memcpy(bad.data() + good.size() - 4, &label, 4);
        spit(dir / "bad.saeact", bad);
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::LabelOutOfRange);
    }
    SUBCASE("zero samples in header") {
        auto bad = good;
        std::memset(bad.data() + 12, 0, 8);
        spit(dir / "bad.saeact", bad);
        CHECK(format_code([&] { ActivationDataset::open(dir / "bad.saeact"); }) == FormatErrc::BadHeader);
    }
    SUBCASE("missing file is an I/O error") {
        CHECK_THROWS_AS(ActivationDataset::open(dir / "absent.saeact"), IoError);
    }
}

TEST_CASE("10 rows with batch size 4 give batches of 4, 4, 2") {
    auto ds = ActivationDataset::from_matrix(Matrix::Random(10, 3), std::nullopt, {});
    for (std::optional<std::uint64_t> seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{5}}) {
        BatchStream s(DatasetView::all(ds), 4, seed);
        CHECK(s.batches_per_epoch() == 3);
        std::vector<Eigen::Index> sizes;
        while (auto b = s.next()) sizes.push_back(b->rows.rows());
        CHECK(sizes == std::vector<Eigen::Index>{4, 4, 2});
    }
}

TEST_CASE("every epoch is a permutation and batches carry the right rows") {
    Matrix x(37, 2);
    for (Eigen::Index i = 0; i < 37; ++i) x.row(i) << static_cast<double>(i), -static_cast<double>(i);
    auto ds = ActivationDataset::from_matrix(x, std::nullopt, {});
    for (std::size_t bs : {1u, 3u, 8u, 37u, 100u}) {
        for (std::uint64_t seed : {0u, 1u, 99u}) {
            BatchStream s(DatasetView::all(ds), bs, seed);
            std::vector<std::size_t> seen;
            while (auto b = s.next()) {
                for (std::size_t r = 0; r < b->indices.size(); ++r)
                    CHECK(b->rows(static_cast<Eigen::Index>(r), 0) == static_cast<double>(b->indices[r]));
                seen.insert(seen.end(), b->indices.begin(), b->indices.end());
            }
            std::sort(seen.begin(), seen.end());
            std::vector<std::size_t> expected(37);
            std::iota(expected.begin(), expected.end(), 0);
            CHECK(seen == expected);
        }
    }
}

TEST_CASE("shuffle is seed-determined") {
    auto ds = ActivationDataset::from_matrix(Matrix::Zero(1000, 1), std::nullopt, {});
    BatchStream a(DatasetView::all(ds), 10, 42), b(DatasetView::all(ds), 10, 42), c(DatasetView::all(ds), 10, 43);
    CHECK(a.order() == b.order());
    CHECK(a.order() != c.order());
    BatchStream plain(DatasetView::all(ds), 10);
    CHECK(std::is_sorted(plain.order().begin(), plain.order().end()));
}

TEST_CASE("prefetching yields exactly the plain stream's batches") {
    auto ds = ActivationDataset::from_matrix(Matrix::Random(101, 4), std::nullopt, {});
    for (std::size_t depth : {1u, 2u, 8u}) {
        BatchStream plain(DatasetView::all(ds), 7, 11);
        PrefetchingBatchStream pre(BatchStream(DatasetView::all(ds), 7, 11), depth);
        while (true) {
            auto a = plain.next();
            auto b = pre.next();
            REQUIRE(a.has_value() == b.has_value());
            if (!a) break;
            CHECK(a->indices == b->indices);
            CHECK(a->rows == b->rows);
        }
    }
}

TEST_CASE("prefetching stream can be abandoned early") {
    auto ds = ActivationDataset::from_matrix(Matrix::Random(500, 4), std::nullopt, {});
    PrefetchingBatchStream pre(BatchStream(DatasetView::all(ds), 1, 0), 2);
    CHECK(pre.next().has_value());
}

TEST_CASE("split is a seeded partition") {
    auto ds = ActivationDataset::from_matrix(Matrix::Zero(100, 1), std::nullopt, {});
    auto [train, val] = split(DatasetView::all(ds), 0.1, 7);
    CHECK(train.size() == 90);
    CHECK(val.size() == 10);
    std::vector<std::size_t> all = train.indices;
    all.insert(all.end(), val.indices.begin(), val.indices.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == 100);
    auto [train2, val2] = split(DatasetView::all(ds), 0.1, 7);
    CHECK(val.indices == val2.indices);
    auto [train3, val3] = split(DatasetView::all(ds), 0.1, 8);
    CHECK(val.indices != val3.indices);
    CHECK_THROWS_AS(split(DatasetView::all(ds), 0.0, 1), InvalidArgument);
    CHECK_THROWS_AS(split(DatasetView::all(ds), 1.0, 1), InvalidArgument);
}

TEST_CASE("dataset_stats") {
    Matrix two(2, 2);
    two << 0, 0, 2, 2;
    auto s = dataset_stats(DatasetView::all(ActivationDataset::from_matrix(two, std::nullopt, {})));
    CHECK(s.mean(0) == doctest::Approx(1.0));
    CHECK(s.mean(1) == doctest::Approx(1.0));
    CHECK(s.stddev(0) == doctest::Approx(1.0));

    Matrix constant = Matrix::Random(5, 2);
    constant.col(1).setConstant(3.25);
    auto c = dataset_stats(DatasetView::all(ActivationDataset::from_matrix(constant, std::nullopt, {})));
    CHECK(c.stddev(1) == 0.0);

    std::mt19937_64 rng(5);
    Matrix r = oracle::random_matrix(1000, 8, rng, 3.0);
    r.array() += 10.0;
    auto ds = ActivationDataset::from_matrix(r, std::nullopt, {});
    auto got = dataset_stats(DatasetView::all(ds));
    oracle::Vec mean, sd;
    oracle::two_pass_stats(oracle::from_matrix(ds->to_matrix()), mean, sd);
    for (int j = 0; j < 8; ++j) {
        CHECK(std::fabs(got.mean(j) - mean[j]) <= 1e-6 * std::fabs(mean[j]));
        CHECK(std::fabs(got.stddev(j) - sd[j]) <= 1e-6 * sd[j]);
    }
}

TEST_CASE("metadata survives a round trip and unknown keys are kept out") {
    auto dir = testutil::scratch_dir("as_meta");
    DatasetMeta meta;
    meta.source_model = "dinov2-vitl14";
    meta.layer_tag = "cls/23";
    meta.notes = "unit";
    write_dataset(dir / "m.saeact", Matrix::Ones(1, 1), std::nullopt, meta);
    auto ds = ActivationDataset::open(dir / "m.saeact");
    CHECK(ds->meta().layer_tag == "cls/23");
    CHECK(ds->meta().notes == "unit");
    CHECK_FALSE(ds->has_labels());
    CHECK_THROWS_AS(ds->label(0), InvalidArgument);
}

}  // TEST_SUITE
