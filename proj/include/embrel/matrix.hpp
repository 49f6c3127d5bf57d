#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace embrel {

/// Dense row-major matrix of doubles. Deliberately minimal: every reduction
/// in this library runs in ascending index order so results are bitwise
/// reproducible, which rules out clever BLAS-style reassociation anyway.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Plain ascending-order dot product. The scoring kernels depend on this
/// exact summation order; do not "optimize" it into a reassociated form.
double dot(std::span<const double> a, std::span<const double> b);

/// sqrt of the ascending-order sum of squares.
double l2_norm(std::span<const double> a);

Matrix matmul(const Matrix& a, const Matrix& b);

/// Aᵀ·B without materializing the transpose.
Matrix mul_at_b(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// ‖QᵀQ − I‖_max, the orthogonality defect.
double orthogonality_defect(const Matrix& q);

/// In-place lower Cholesky factor of a symmetric matrix. Returns false and
/// reports the failing pivot index if the matrix is not positive definite.
bool cholesky(const Matrix& a, Matrix& lower, std::size_t* bad_pivot = nullptr);

/// Solves L·Lᵀ·x = rhs given the lower factor.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> rhs);

}  // namespace embrel
