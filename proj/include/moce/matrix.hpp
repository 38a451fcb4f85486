#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "moce/error.hpp"
#include "moce/rng.hpp"

namespace moce {

// Row-major dense matrix of 64-bit floats. All kernel ops copy; no views.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 0 || c < 0) throw DimensionError("DenseMatrix: negative shape");
    }

    static DenseMatrix row_vector(std::span<const double> v) {
        DenseMatrix m(1, static_cast<int>(v.size()));
        std::copy(v.begin(), v.end(), m.data.begin());
        return m;
    }

    static DenseMatrix column_vector(std::span<const double> v) {
        DenseMatrix m(static_cast<int>(v.size()), 1);
        std::copy(v.begin(), v.end(), m.data.begin());
        return m;
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

    std::size_t numel() const { return data.size(); }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) return false;
    return a.data.empty() ||
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

inline DenseMatrix random_gaussian(int rows, int cols, double sigma, RngStream& rng) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data) v = sigma * rng.next_gaussian();
    return m;
}

// Probability vector: entries in [0,1], summing to 1 within kSumTol.
struct ProbVector {
    std::vector<double> p;

    static constexpr double kSumTol = 1e-9;

    int dim() const { return static_cast<int>(p.size()); }

    void validate() const {
        if (p.empty()) throw DimensionError("ProbVector: dim must be >= 1");
        double sum = 0.0;
        for (double v : p) {
            if (!std::isfinite(v)) throw NumericError("ProbVector: non-finite entry");
            if (v < 0.0 || v > 1.0) throw ValidationError("ProbVector: entry outside [0,1]");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > kSumTol)
            throw ValidationError("ProbVector: entries sum to " + std::to_string(sum));
    }
};

} // namespace moce
