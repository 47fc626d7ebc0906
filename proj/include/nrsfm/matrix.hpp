#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "nrsfm/errors.hpp"

namespace nrsfm {

// Dense row-major matrix of doubles. The single numeric carrier for
// observations, shapes, rotations, weights and every intermediate value.
class Matrix {
public:
    Matrix() = default;

    Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
        if (rows <= 0 || cols <= 0)
            throw UsageError("Matrix: dimensions must be positive, got " + shape_str(rows, cols));
        data_.assign(static_cast<size_t>(rows) * cols, 0.0);
    }

    Matrix(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows <= 0 || cols <= 0)
            throw UsageError("Matrix: dimensions must be positive, got " + shape_str(rows, cols));
        if (data_.size() != static_cast<size_t>(rows) * cols)
            throw UsageError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(rows, cols));
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        int r = static_cast<int>(rows.size());
        int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        Matrix m(r, c);
        int i = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c)
                throw UsageError("Matrix::from_rows: ragged rows");
            int j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const { return shape_str(rows_, cols_); }

    static std::string shape_str(int r, int c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("multiply: " + a.shape_str() + " x " + b.shape_str());
    Matrix c(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        double* crow = c.data() + static_cast<size_t>(i) * n;
        const double* arow = a.data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aik = arow[p];
            const double* brow = b.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// acc += a * b
inline void add_multiply(Matrix& acc, const Matrix& a, const Matrix& b) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        double* crow = acc.data() + static_cast<size_t>(i) * n;
        const double* arow = a.data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aik = arow[p];
            const double* brow = b.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// acc += a * b^T
inline void add_multiply_nt(Matrix& acc, const Matrix& a, const Matrix& b) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<size_t>(i) * k;
        double* crow = acc.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b.data() + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// acc += a^T * b
inline void add_multiply_tn(Matrix& acc, const Matrix& a, const Matrix& b) {
    const int m = a.cols(), k = a.rows(), n = b.cols();
    for (int p = 0; p < k; ++p) {
        const double* arow = a.data() + static_cast<size_t>(p) * m;
        const double* brow = b.data() + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double aip = arow[i];
            double* crow = acc.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("add: " + a.shape_str() + " vs " + b.shape_str());
    Matrix c = a;
    for (int i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimensionError("subtract: " + a.shape_str() + " vs " + b.shape_str());
    Matrix c = a;
    for (int i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (int i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

inline double l1_norm(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += std::fabs(a.data()[i]);
    return s;
}

inline double sum_entries(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a.data()[i];
    return s;
}

inline double max_abs(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s = std::max(s, std::fabs(a.data()[i]));
    return s;
}

// Subtract each row's mean from that row.
inline Matrix center_rows(const Matrix& a) {
    Matrix c = a;
    for (int i = 0; i < c.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < c.cols(); ++j) mean += c(i, j);
        mean /= c.cols();
        for (int j = 0; j < c.cols(); ++j) c(i, j) -= mean;
    }
    return c;
}

inline double max_row_mean_abs(const Matrix& a) {
    double worst = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < a.cols(); ++j) mean += a(i, j);
        worst = std::max(worst, std::fabs(mean / a.cols()));
    }
    return worst;
}

} // namespace nrsfm
