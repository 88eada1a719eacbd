#pragma once

#include <cstddef>
#include <vector>

#include "patchlab/rng.hpp"

namespace patchlab {

using Vector = std::vector<double>;

// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Standard product; rejects m.cols != v.size(), rejects non-finite results.
Vector matvec(const Matrix& m, const Vector& v);

Vector relu(const Vector& v);

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);

// dot(a,b)/(|a||b|), clamped to [-1, 1]; zero-norm inputs are rejected.
double cosine_similarity(const Vector& a, const Vector& b);

// a + c * b
Vector axpy(const Vector& a, double c, const Vector& b);

Vector scale(const Vector& v, double c);

Vector unit(const Vector& v);

bool all_finite(const Vector& v);

}  // namespace patchlab
