#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "ltdd/datasets.hpp"
#include "ltdd/errors.hpp"
#include "ltdd/graph.hpp"
#include "ltdd/losses.hpp"
#include "ltdd/training.hpp"

using namespace ltdd;
namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> counts(double beta, std::size_t c, std::size_t n_max) {
    return longtail_counts(LongTailSpec{beta, c, n_max, 1});
}

// Rows as (label, features) pairs, sorted, for multiset comparison.
std::vector<std::pair<int, std::vector<double>>> items(const LabeledSet& d) {
    std::vector<std::pair<int, std::vector<double>>> out;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto row = d.features().row(i);
        out.push_back({d.labels()[i], std::vector<double>(row.begin(), row.end())});
    }
    std::sort(out.begin(), out.end());
    return out;
}

LabeledSet tiny(std::vector<int> labels, std::size_t classes) {
    Tensor x = Tensor::zeros({labels.size(), 2});
    for (std::size_t i = 0; i < labels.size(); ++i) x(i, 0) = static_cast<double>(i);
    return LabeledSet(std::move(x), std::move(labels), classes);
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("ltdd_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("longtail counts against a high-precision oracle") {
    // floor(n_max * beta^(-c/C)) evaluated with 50-digit arithmetic.
    CHECK(counts(100, 10, 500) == std::vector<std::size_t>{500, 315, 199, 125, 79, 50, 31, 19, 12, 7});
    CHECK(counts(10, 2, 100) == std::vector<std::size_t>{100, 31});
    CHECK(counts(50, 5, 500) == std::vector<std::size_t>{500, 228, 104, 47, 21});
    CHECK(counts(100, 5, 500) == std::vector<std::size_t>{500, 199, 79, 31, 12});
    CHECK(counts(200, 10, 5000) == std::vector<std::size_t>{5000, 2943, 1732, 1020, 600, 353, 208, 122, 72, 42});
}

TEST_CASE("beta one gives uniform counts") {
    CHECK(counts(1, 10, 500) == std::vector<std::size_t>(10, 500));
}

TEST_CASE("min_count clamps the tail") {
    const auto c = longtail_counts(LongTailSpec{1e6, 4, 10, 3});
    CHECK(c.back() == 3);
}

TEST_CASE("longtail counts are non-increasing and track the decay ratio") {
    for (double beta : {1.5, 10.0, 50.0, 100.0, 256.0}) {
        for (std::size_t classes : {2u, 5u, 10u, 100u}) {
            const auto c = counts(beta, classes, 5000);
            CHECK(c.front() == 5000);
            for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] <= c[i - 1]);
            const double expected = 5000.0 * std::pow(beta, -static_cast<double>(classes - 1) / static_cast<double>(classes));
            CHECK(std::abs(static_cast<double>(c.back()) - expected) <= 1.0);
        }
    }
}

TEST_CASE("longtail spec validation names beta") {
    try {
        longtail_counts(LongTailSpec{0.5, 10, 500, 1});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("beta >= 1") != std::string::npos);
    }
    CHECK_THROWS_AS(longtail_counts(LongTailSpec{2, 10, 500, 0}), ValidationError);
    CHECK_THROWS_AS(longtail_counts(LongTailSpec{2, 1, 500, 1}), ValidationError);
    CHECK_THROWS_AS(longtail_counts(LongTailSpec{std::nan(""), 10, 500, 1}), ValidationError);
}

TEST_CASE("labeled set invariants") {
    const LabeledSet d = tiny({0, 1, 1, 2}, 3);
    CHECK(d.class_counts() == std::vector<std::size_t>{1, 2, 1});
    CHECK(d.indices_of(1) == std::vector<std::size_t>{1, 2});
    CHECK_FALSE(d.is_balanced());
    CHECK_THROWS_AS(tiny({0, 3}, 3), ValidationError);
    CHECK_THROWS_AS(tiny({0, -1}, 3), ValidationError);
    CHECK_THROWS_AS(tiny({0, 0}, 1), ValidationError);
}

TEST_CASE("subsample_longtail draws exact counts deterministically") {
    const LabeledSet full = gen_toy(ToySpec{}, 50);
    const std::vector<std::size_t> want{50, 20, 8, 3, 1};
    const LabeledSet a = subsample_longtail(full, want, 9);
    CHECK(a.class_counts() == want);
    CHECK(items(a) == items(subsample_longtail(full, want, 9)));
    CHECK(a.features() == subsample_longtail(full, want, 9).features());
}

TEST_CASE("subsample_longtail with full counts is a permutation") {
    const LabeledSet full = gen_toy(ToySpec{}, 20);
    const LabeledSet all = subsample_longtail(full, full.class_counts(), 4);
    CHECK(items(all) == items(full));
}

TEST_CASE("subsample_longtail names the short class") {
    const LabeledSet full = tiny({0, 0, 1, 2, 2}, 3);
    try {
        subsample_longtail(full, std::vector<std::size_t>{1, 2, 1}, 0);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
}

TEST_CASE("balanced_resample modes") {
    const LabeledSet d = tiny({0, 0, 0, 0, 1, 1}, 2);
    const LabeledSet under = balanced_resample(d, ResampleMode::undersample, 1);
    CHECK(under.class_counts() == std::vector<std::size_t>{2, 2});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const LabeledSet over = balanced_resample(d, ResampleMode::oversample, seed);
        CHECK(over.class_counts() == std::vector<std::size_t>{4, 4});
        std::map<double, int> seen;
        for (std::size_t i = 0; i < over.size(); ++i) {
            if (over.labels()[i] == 1) ++seen[over.features()(i, 0)];
        }
        CHECK(seen[4.0] >= 1);
        CHECK(seen[5.0] >= 1);
    }
    CHECK_THROWS_AS(balanced_resample(tiny({0, 0, 2}, 3), ResampleMode::oversample, 0), ValidationError);
}

TEST_CASE("balanced input is unchanged as a multiset") {
    const LabeledSet d = tiny({0, 1, 0, 1}, 2);
    CHECK(items(balanced_resample(d, ResampleMode::undersample, 3)) == items(d));
    CHECK(items(balanced_resample(d, ResampleMode::oversample, 3)) == items(d));
}

TEST_CASE("toy generator is deterministic and streams differ") {
    ToySpec spec;
    spec.seed = 5;
    CHECK(gen_toy(spec, 10).features() == gen_toy(spec, 10).features());
    CHECK(gen_toy(spec, 10, 0).features() != gen_toy(spec, 10, 1).features());
    spec.kind = ToyKind::concentric_rings;
    const LabeledSet rings = gen_toy(spec, 10);
    CHECK(rings.class_counts() == std::vector<std::size_t>(5, 10));
    CHECK_THROWS_AS(gen_toy(ToySpec{ToyKind::gaussian_blobs, 5, 1}, 10), ValidationError);
    CHECK_THROWS_AS(gen_toy(ToySpec{ToyKind::gaussian_blobs, 5, 16, 4.0, 0.0}, 10), ValidationError);
}

TEST_CASE("near-noiseless blobs are separated by nearest center") {
    ToySpec spec;
    spec.noise = 1e-9;
    for (std::size_t c : {5u, 20u, 40u}) {
        spec.num_classes = c;
        const LabeledSet d = gen_toy(spec, 20);
        const Tensor centers = toy_centers(spec);
        for (std::size_t i = 0; i < d.size(); ++i) {
            std::size_t best = 0;
            double best_dist = 1e300;
            for (std::size_t k = 0; k < c; ++k) {
                double dist = 0.0;
                for (std::size_t j = 0; j < spec.dim; ++j) {
                    const double diff = d.features()(i, j) - centers(k, j);
                    dist += diff * diff;
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best = k;
                }
            }
            CHECK(static_cast<int>(best) == d.labels()[i]);
        }
    }
}

TEST_CASE("linear probe on separation-4 blobs exceeds 95 percent") {
    ToySpec spec;
    spec.seed = 1;
    const LabeledSet train = gen_toy(spec, 500, 0);
    const LabeledSet test = gen_toy(spec, 500, 1);
    Tensor w = Tensor::zeros({spec.dim, spec.num_classes});
    Tensor b = Tensor::zeros({spec.num_classes});
    const Tensor targets = one_hot(train.labels(), spec.num_classes);
    for (int step = 0; step < 200; ++step) {
        Graph g;
        const NodeId wn = g.leaf(w), bn = g.leaf(b);
        const NodeId logits = g.add_rowvec(g.matmul(g.constant(train.features()), wn), bn);
        const auto grads = g.backward(soft_cross_entropy(g, logits, g.constant(targets)));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * grads.at(wn)[i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= 0.5 * grads.at(bn)[i];
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::size_t best = 0;
        double best_score = -1e300;
        for (std::size_t k = 0; k < spec.num_classes; ++k) {
            double s = b[k];
            for (std::size_t j = 0; j < spec.dim; ++j) s += test.features()(i, j) * w(j, k);
            if (s > best_score) {
                best_score = s;
                best = k;
            }
        }
        if (static_cast<int>(best) == test.labels()[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(test.size()) > 0.95);
}

TEST_CASE("idx round trip scales pixels") {
    const fs::path dir = temp_dir("idx_ok");
    const std::vector<std::uint8_t> pixels{0, 255, 51, 102, 0, 0, 255, 255};
    const std::vector<std::uint8_t> labels{0, 1};
    save_idx(dir / "img", dir / "lab", pixels, labels, 2, 2);
    const LabeledSet d = load_idx(dir / "img", dir / "lab");
    CHECK(d.size() == 2);
    CHECK(d.dim() == 4);
    CHECK(d.features()(0, 1) == 1.0);
    CHECK(d.features()(0, 2) == doctest::Approx(0.2));
    CHECK(d.labels() == std::vector<int>{0, 1});
    CHECK(d.num_classes() == 2);
}

TEST_CASE("idx failures are distinct") {
    const fs::path dir = temp_dir("idx_bad");
    const std::vector<std::uint8_t> pixels(8, 7);
    const std::vector<std::uint8_t> labels{0, 1};
    save_idx(dir / "img", dir / "lab", pixels, labels, 2, 2);

    auto kind_of = [](const fs::path& img, const fs::path& lab) {
        try {
            load_idx(img, lab);
        } catch (const FormatError& e) {
            return e.kind();
        }
        FAIL("expected FormatError");
        return FormatError::Kind::io;
    };

    SUBCASE("labels file given as images") {
        CHECK(kind_of(dir / "lab", dir / "lab") == FormatError::Kind::bad_magic);
        try {
            load_idx(dir / "lab", dir / "lab");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("wrong magic") != std::string::npos);
        }
    }
    SUBCASE("truncated images") {
        fs::resize_file(dir / "img", 16 + 5);
        CHECK(kind_of(dir / "img", dir / "lab") == FormatError::Kind::truncated);
    }
    SUBCASE("count mismatch") {
        save_idx(dir / "lab3", dir / "lab3l", std::vector<std::uint8_t>(12, 0), std::vector<std::uint8_t>{0, 1, 1}, 2, 2);
        CHECK(kind_of(dir / "img", dir / "lab3l") == FormatError::Kind::count_mismatch);
    }
    SUBCASE("missing file") { CHECK(kind_of(dir / "nope", dir / "lab") == FormatError::Kind::io); }
}
