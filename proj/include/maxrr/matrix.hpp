#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maxrr/error.hpp"

namespace maxrr {

// Dense row-major matrix of doubles. Rows are the unit of access everywhere
// (samples, embeddings, weight rows).
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(size_t i) { return {data.data() + i * cols, cols}; }

    double& at(size_t i, size_t j) { return data[i * cols + j]; }
    double at(size_t i, size_t j) const { return data[i * cols + j]; }

    bool empty() const { return rows == 0; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace maxrr
