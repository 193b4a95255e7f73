#include "adasgd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace adasgd::linalg {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows * cols) throw std::invalid_argument("Matrix: entry count does not match shape");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

Vector tmatvec(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw std::invalid_argument("tmatvec: shape mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += ai[j] * x[i];
    }
    return y;
}

Matrix gram(const Matrix& a) {
    const std::size_t d = a.cols();
    Matrix g(d, d);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ak = a.row(k);
        for (std::size_t i = 0; i < d; ++i) {
            double aki = ak[i];
            for (std::size_t j = i; j < d; ++j) g(i, j) += aki * ak[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
    return g;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

double max_abs(const Matrix& a) { return norm_inf(a.entries()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("max_abs_diff: shape mismatch");
    return max_abs_diff(a.entries(), b.entries());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("subtract: size mismatch");
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    return c;
}

Vector scaled(std::span<const double> a, double s) {
    Vector c(a.begin(), a.end());
    for (double& x : c) x *= s;
    return c;
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

QR householder_qr(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (m < n) throw std::invalid_argument("householder_qr: requires rows >= cols");
    Matrix w = a;
    std::vector<Vector> reflectors(n);

    for (std::size_t k = 0; k < n; ++k) {
        Vector v(m - k);
        for (std::size_t i = k; i < m; ++i) v[i - k] = w(i, k);
        double nx = norm2(v);
        if (nx == 0.0) continue;
        double alpha = v[0] >= 0.0 ? -nx : nx;
        v[0] -= alpha;
        double nv = norm2(v);
        if (nv == 0.0) continue;
        for (double& x : v) x /= nv;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * w(i, j);
            s *= 2.0;
            for (std::size_t i = k; i < m; ++i) w(i, j) -= s * v[i - k];
        }
        reflectors[k] = std::move(v);
    }

    Matrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t kk = n; kk-- > 0;) {
        const Vector& v = reflectors[kk];
        if (v.empty()) continue;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = kk; i < m; ++i) s += v[i - kk] * q(i, j);
            s *= 2.0;
            for (std::size_t i = kk; i < m; ++i) q(i, j) -= s * v[i - kk];
        }
    }

    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) r(i, j) = w(i, j);

    for (std::size_t j = 0; j < n; ++j) {
        if (r(j, j) >= 0.0) continue;
        for (std::size_t c = j; c < n; ++c) r(j, c) = -r(j, c);
        for (std::size_t i = 0; i < m; ++i) q(i, j) = -q(i, j);
    }
    return {std::move(q), std::move(r)};
}

Matrix haar_orthonormal_columns(std::size_t n, std::size_t k, Rng& rng) {
    if (k == 0 || n < k) throw std::invalid_argument("haar_orthonormal_columns: need 1 <= k <= n");
    Matrix g(n, k);
    for (double& x : g.entries()) x = standard_normal(rng);
    return householder_qr(g).q;
}

Matrix haar_orthogonal(std::size_t d, Rng& rng) {
    if (d == 0) throw std::invalid_argument("haar_orthogonal: d must be >= 1");
    return haar_orthonormal_columns(d, d, rng);
}

Eigh jacobi_eigh(const Matrix& s, const Tolerances& tol) {
    const std::size_t d = s.rows();
    if (s.cols() != d) throw std::invalid_argument("jacobi_eigh: matrix must be square");
    if (d > tol.max_eigen_dim) throw std::invalid_argument("jacobi_eigh: dimension exceeds limit");
    const double scale = max_abs(s);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(s(i, j) - s(j, i)) >= tol.symmetry * std::max(1.0, scale))
                throw std::invalid_argument("jacobi_eigh: matrix is not symmetric");

    Matrix a = s;
    Matrix v = Matrix::identity(d);
    const double threshold = tol.jacobi_offdiag * scale;

    auto off_max = [&] {
        double m = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) m = std::max(m, std::abs(a(i, j)));
        return m;
    };

    int sweep = 0;
    while (off_max() > threshold) {
        if (sweep++ >= tol.jacobi_max_sweeps) throw std::runtime_error("jacobi_eigh: no convergence");
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double apq = a(p, q);
                if (std::abs(apq) <= threshold * 1e-3) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    Eigh out{Matrix(d, d), Vector(d)};
    for (std::size_t r = 0; r < d; ++r) {
        std::size_t src = order[r];
        out.lambda[r] = a(src, src);
        for (std::size_t k = 0; k < d; ++k) out.q(r, k) = v(k, src);
    }
    return out;
}

Vector project_box(std::span<const double> theta, std::span<const double> lo, std::span<const double> hi) {
    if (theta.size() != lo.size() || theta.size() != hi.size()) throw std::invalid_argument("project_box: size mismatch");
    Vector out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (lo[i] > hi[i]) throw std::invalid_argument("project_box: lo > hi");
        out[i] = std::clamp(theta[i], lo[i], hi[i]);
    }
    return out;
}

}  // namespace adasgd::linalg
