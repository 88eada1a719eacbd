#include "patchlab/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols != v.size()) throw dimension_error("matvec: cols != v.dim");
    Vector out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = &m.data[r * m.cols];
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    if (!all_finite(out)) throw dimension_error("matvec: non-finite result");
    return out;
}

Vector relu(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    return out;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw dimension_error("dot: dim mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw dimension_error("cosine_similarity: dim mismatch");
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        throw degenerate_error("cosine_similarity: zero-norm input");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector axpy(const Vector& a, double c, const Vector& b) {
    if (a.size() != b.size()) throw dimension_error("axpy: dim mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + c * b[i];
    return out;
}

Vector scale(const Vector& v, double c) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = c * v[i];
    return out;
}

Vector unit(const Vector& v) {
    double n = norm(v);
    if (n == 0.0) throw degenerate_error("unit: zero-norm input");
    return scale(v, 1.0 / n);
}

bool all_finite(const Vector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace patchlab
