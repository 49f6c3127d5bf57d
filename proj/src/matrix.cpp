#include "embrel/matrix.hpp"

#include <cmath>
#include <cstdlib>

namespace embrel {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t kk = 0; kk < a.cols(); ++kk) {
            const double aik = a(i, kk);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(kk, j);
        }
    }
    return out;
}

Matrix mul_at_b(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols(), b.cols());
    for (std::size_t kk = 0; kk < a.rows(); ++kk) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(kk, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(kk, j);
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

double orthogonality_defect(const Matrix& q) {
    double worst = 0.0;
    for (std::size_t i = 0; i < q.cols(); ++i) {
        for (std::size_t j = 0; j < q.cols(); ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < q.rows(); ++kk) s += q(kk, i) * q(kk, j);
            const double target = (i == j) ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(s - target));
        }
    }
    return worst;
}

bool cholesky(const Matrix& a, Matrix& lower, std::size_t* bad_pivot) {
    const std::size_t n = a.rows();
    lower = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t kk = 0; kk < j; ++kk) d -= lower(j, kk) * lower(j, kk);
        if (!(d > 0.0)) {
            if (bad_pivot) *bad_pivot = j;
            return false;
        }
        lower(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t kk = 0; kk < j; ++kk) s -= lower(i, kk) * lower(j, kk);
            lower(i, j) = s / lower(j, j);
        }
    }
    return true;
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> rhs) {
    const std::size_t n = lower.rows();
    std::vector<double> x(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t kk = 0; kk < i; ++kk) s -= lower(i, kk) * x[kk];
        x[i] = s / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t kk = ii + 1; kk < n; ++kk) s -= lower(kk, ii) * x[kk];
        x[ii] = s / lower(ii, ii);
    }
    return x;
}

}  // namespace embrel
