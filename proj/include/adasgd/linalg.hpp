#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adasgd/rng.hpp"

namespace adasgd::linalg {

using Vector = std::vector<double>;

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    const std::vector<double>& entries() const { return data_; }
    std::vector<double>& entries() { return data_; }

    Matrix transpose() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Tolerances {
    double symmetry = 1e-9;
    double jacobi_offdiag = 1e-12;
    int jacobi_max_sweeps = 100;
    std::size_t max_eigen_dim = 512;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// aᵀx without forming the transpose.
Vector tmatvec(const Matrix& a, std::span<const double> x);
/// aᵀa.
Matrix gram(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
Vector scaled(std::span<const double> a, double s);
bool all_finite(std::span<const double> a);

/// Matrix with orthonormal columns (n×k, k ≤ n): the first k columns of a Haar-distributed orthogonal matrix.
Matrix haar_orthonormal_columns(std::size_t n, std::size_t k, Rng& rng);
/// Haar-distributed d×d orthogonal matrix.
Matrix haar_orthogonal(std::size_t d, Rng& rng);

struct QR {
    Matrix q;  // rows × cols, orthonormal columns
    Matrix r;  // cols × cols, upper triangular with non-negative diagonal
};
QR householder_qr(const Matrix& a);

struct Eigh {
    Matrix q;       // rows are eigenvectors: s = qᵀ diag(lambda) q
    Vector lambda;  // descending
};
Eigh jacobi_eigh(const Matrix& s, const Tolerances& tol = {});

Vector project_box(std::span<const double> theta, std::span<const double> lo, std::span<const double> hi);

}  // namespace adasgd::linalg
