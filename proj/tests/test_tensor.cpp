#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "kae/error.hpp"
#include "kae/parallel.hpp"
#include "kae/rng.hpp"
#include "kae/tensor.hpp"

using namespace kae;

TEST_CASE("tensor construction and factories") {
    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.extent(0) == 2);
    CHECK(t.extent(1) == 3);
    CHECK(t.numel() == 6);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

    Tensor rows{{1.0, 2.0}, {3.0, 4.0}};
    CHECK(rows.at(0, 1) == 2.0);
    CHECK(rows.at(1, 0) == 3.0);

    Tensor f = Tensor::full({3}, 2.5);
    CHECK(f[2] == 2.5);

    Tensor s = Tensor::scalar(-1.0);
    CHECK(s.numel() == 1);
    CHECK(s[0] == -1.0);

    Tensor v = Tensor::vector({1.0, 2.0, 3.0});
    CHECK(v.rank() == 1);
    CHECK(v[1] == 2.0);

    Tensor eye = Tensor::identity(3);
    CHECK(eye.at(0, 0) == 1.0);
    CHECK(eye.at(0, 1) == 0.0);
    CHECK(eye.at(2, 2) == 1.0);
}

TEST_CASE("tensor shape helpers") {
    Tensor t({4, 5});
    CHECK(t.shape_string() == "[4x5]");
    CHECK(t.same_shape(Tensor({4, 5})));
    CHECK_FALSE(t.same_shape(Tensor({5, 4})));
    CHECK(shape_numel({2, 3, 4}) == 24);

    Tensor r = t.reshaped({20});
    CHECK(r.rank() == 1);
    CHECK(r.numel() == 20);
    CHECK_THROWS_AS(t.reshaped({3, 3}), Error);
}

TEST_CASE("tensor data checks") {
    Tensor t = Tensor::vector({1.0, -3.0, 2.0});
    CHECK(t.max_abs() == 3.0);
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("mismatched data length is rejected") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), Error);
}

TEST_CASE("error kinds map to exit codes") {
    CHECK(exit_code_for(ErrorKind::config) == 2);
    CHECK(exit_code_for(ErrorKind::dimension) == 2);
    CHECK(exit_code_for(ErrorKind::parameter) == 2);
    CHECK(exit_code_for(ErrorKind::format) == 3);
    CHECK(exit_code_for(ErrorKind::io) == 3);
    CHECK(exit_code_for(ErrorKind::numeric) == 4);
    try {
        throw Error::io("missing file");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()) == "missing file");
    }
}

TEST_CASE("rng is reproducible and seed-sensitive") {
    Rng a(42), b(42), c(43);
    bool same = true, diff = false;
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t x = a.next_u64();
        same = same && (x == b.next_u64());
        diff = diff || (x != c.next_u64());
    }
    CHECK(same);
    CHECK(diff);
}

TEST_CASE("rng uniform stays in range and fills it") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-2.0, 3.0);
        CHECK(u >= -2.0);
        CHECK(u < 3.0);
    }
}

TEST_CASE("rng uniform_int covers both endpoints") {
    Rng rng(11);
    std::set<int> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(static_cast<int>(rng.uniform_int(1, 8)));
    CHECK(*seen.begin() == 1);
    CHECK(*seen.rbegin() == 8);
    CHECK(seen.size() == 8);
}

TEST_CASE("rng normal has sane moments") {
    Rng rng(3);
    double sum = 0.0, sumsq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("mix_seed separates streams") {
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
    CHECK(mix_seed(5, 7) == mix_seed(5, 7));
}

TEST_CASE("parallel_for covers every index exactly once") {
    const std::size_t n = 1013;
    std::vector<int> hits(n, 0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) hits[i] += 1;
    });
    for (std::size_t i = 0; i < n; ++i) CHECK(hits[i] == 1);
}

TEST_CASE("parallel_for handles tiny and empty ranges") {
    int count = 0;
    parallel_for(0, [&](std::size_t, std::size_t) { count = -100; });
    CHECK(count == 0);
    std::vector<int> hits(2, 0);
    parallel_for(2, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) hits[i] += 1;
    });
    CHECK(hits[0] == 1);
    CHECK(hits[1] == 1);
}

TEST_CASE("nested parallel_for still covers all work") {
    const std::size_t n = 64;
    std::vector<int> hits(n * n, 0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            parallel_for(n, [&](std::size_t b2, std::size_t e2) {
                for (std::size_t j = b2; j < e2; ++j) hits[i * n + j] += 1;
            });
        }
    });
    for (std::size_t i = 0; i < n * n; ++i) CHECK(hits[i] == 1);
}
