#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "patchlab/error.hpp"
#include "patchlab/tensor.hpp"

using namespace patchlab;

TEST_CASE("matvec matches a hand computation") {
    Matrix m(2, 3);
    m.at(0, 0) = 1.0; m.at(0, 1) = 2.0; m.at(0, 2) = 3.0;
    m.at(1, 0) = -1.0; m.at(1, 1) = 0.5; m.at(1, 2) = 4.0;
    Vector v = {2.0, -1.0, 1.0};
    Vector y = matvec(m, v);
    REQUIRE(y.size() == 2);
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[1] == doctest::Approx(1.5));
}

TEST_CASE("matvec rejects shape mismatch") {
    Matrix m(2, 3);
    Vector v = {1.0, 2.0};
    CHECK_THROWS_AS((void)matvec(m, v), Error);
}

TEST_CASE("matvec rejects non-finite results") {
    Matrix m(1, 1);
    m.at(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)matvec(m, Vector{1.0}), Error);
}

TEST_CASE("relu clips negatives only") {
    Vector v = {-2.0, 0.0, 3.5, -0.1};
    Vector r = relu(v);
    CHECK(r == Vector{0.0, 0.0, 3.5, 0.0});
}

TEST_CASE("dot and norm") {
    Vector a = {1.0, 2.0, 2.0};
    Vector b = {2.0, 0.0, -1.0};
    CHECK(dot(a, b) == doctest::Approx(0.0));
    CHECK(norm(a) == doctest::Approx(3.0));
}

TEST_CASE("cosine similarity basics") {
    Vector a = {1.0, 0.0};
    Vector b = {0.0, 1.0};
    Vector c = {2.0, 0.0};
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
    CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, Vector{-3.0, 0.0}) == doctest::Approx(-1.0));
}

TEST_CASE("cosine similarity is scale invariant and clamped") {
    Vector a = {0.3, -0.7, 0.11};
    Vector b = {1.9, 0.4, -2.2};
    double c1 = cosine_similarity(a, b);
    double c2 = cosine_similarity(scale(a, 17.0), scale(b, 0.03));
    CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
    CHECK(c1 >= -1.0);
    CHECK(c1 <= 1.0);
    // numerically parallel vectors must clamp rather than exceed 1
    Vector p = {1e-8, 2e-8, -3e-8};
    CHECK(cosine_similarity(p, scale(p, 1e9)) <= 1.0);
}

TEST_CASE("cosine similarity rejects zero-norm input") {
    CHECK_THROWS_AS((void)cosine_similarity(Vector{0.0, 0.0}, Vector{1.0, 0.0}), Error);
    CHECK_THROWS_AS((void)cosine_similarity(Vector{1.0, 0.0}, Vector{0.0, 0.0}), Error);
}

TEST_CASE("axpy and scale") {
    Vector a = {1.0, 2.0};
    Vector b = {10.0, -10.0};
    CHECK(axpy(a, 0.5, b) == Vector{6.0, -3.0});
    CHECK(scale(a, -2.0) == Vector{-2.0, -4.0});
}

TEST_CASE("unit returns a direction of norm one") {
    Vector u = unit(Vector{3.0, 4.0});
    CHECK(norm(u) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS((void)unit(Vector{0.0, 0.0}), Error);
}

TEST_CASE("all_finite flags NaN and infinity") {
    CHECK(all_finite(Vector{1.0, -2.0, 0.0}));
    CHECK_FALSE(all_finite(Vector{1.0, std::numeric_limits<double>::quiet_NaN()}));
    CHECK_FALSE(all_finite(Vector{std::numeric_limits<double>::infinity()}));
}
