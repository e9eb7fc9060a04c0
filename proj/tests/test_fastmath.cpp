#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kae/fastmath.hpp"
#include "kae/rng.hpp"

using namespace kae;

TEST_CASE("fast_exp matches std::exp over the working range") {
    Rng rng(991);
    double worst = 0.0;
    for (int i = 0; i < 200000; ++i) {
        const double x = rng.uniform(-708.0, 709.0);
        const double ref = std::exp(x);
        const double got = fast_exp(x);
        worst = std::max(worst, std::abs(got - ref) / ref);
    }
    CHECK(worst < 1e-13);
}

TEST_CASE("fast_exp softmax-style arguments are tight") {
    Rng rng(17);
    double worst = 0.0;
    for (int i = 0; i < 200000; ++i) {
        const double x = -rng.uniform(0.0, 60.0);
        worst = std::max(worst, std::abs(fast_exp(x) - std::exp(x)) / std::exp(x));
    }
    CHECK(worst < 1e-14);
}

TEST_CASE("fast_exp boundary behaviour") {
    CHECK(fast_exp(0.0) == 1.0);
    CHECK(fast_exp(-800.0) == 0.0);
    CHECK(fast_exp(-5000.0) == 0.0);
    CHECK(fast_exp(800.0) == std::numeric_limits<double>::infinity());
    CHECK(std::isnan(fast_exp(std::numeric_limits<double>::quiet_NaN())));
    // Near the underflow edge the result may dip into denormals but must stay
    // within an ulp-scale neighbourhood of the true value.
    const double x = -708.0;
    CHECK(fast_exp(x) == doctest::Approx(std::exp(x)).epsilon(1e-12));
}

TEST_CASE("eight-lane reductions match plain loops") {
    Rng rng(5);
    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{8},
                          std::size_t{9}, std::size_t{64}, std::size_t{129}}) {
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-2.0, 2.0);
            b[i] = rng.uniform(-2.0, 2.0);
        }
        double dot = 0.0, sum = 0.0, mx = a[0];
        for (std::size_t i = 0; i < n; ++i) {
            dot += a[i] * b[i];
            sum += a[i];
            mx = std::max(mx, a[i]);
        }
        CHECK(dot8(a.data(), b.data(), n) == doctest::Approx(dot).epsilon(1e-12));
        CHECK(sum8(a.data(), n) == doctest::Approx(sum).epsilon(1e-12));
        CHECK(max8(a.data(), n) == mx);  // max is exact regardless of order
    }
}

// The determinism contract is "same machine code, same input => same bits".
// Taking the address forces one out-of-line instantiation shared by every
// call, mirroring how the compiled kernels invoke these helpers; inlined
// copies at distinct call sites may contract FMAs differently and are not
// required to agree in the last bit.
TEST_CASE("reductions are deterministic across repeated calls") {
    Rng rng(23);
    std::vector<double> a(1000), b(1000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
    }
    volatile auto dot_fn = &dot8;
    volatile auto sum_fn = &sum8;
    const double d0 = dot_fn(a.data(), b.data(), a.size());
    const double s0 = sum_fn(a.data(), a.size());
    for (int rep = 0; rep < 5; ++rep) {
        CHECK(dot_fn(a.data(), b.data(), a.size()) == d0);
        CHECK(sum_fn(a.data(), a.size()) == s0);
    }
}
