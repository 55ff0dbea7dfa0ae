#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "idccp/error.hpp"

namespace idccp {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
        require_finite("Matrix construction");
    }

    // Matrix{{1, 2}, {3, 4}}
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
            data_.insert(data_.end(), r.begin(), r.end());
        }
        require_finite("Matrix construction");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void require_finite(const char* where) const {
        if (!all_finite()) throw NonFiniteError(std::string(where) + ": non-finite entry");
    }

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

inline void require_square(const Matrix& a, const char* op) {
    if (a.rows() != a.cols()) {
        throw ShapeError(std::string(op) + ": expected a square matrix, got " + a.shape_string());
    }
}

} // namespace detail

inline Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

inline Matrix diag(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

inline Matrix diag(std::initializer_list<double> values) {
    return diag(std::span<const double>(values.begin(), values.size()));
}

// I - (1/n) 1 1^T
inline Matrix centering_matrix(std::size_t n) {
    if (n == 0) throw ShapeError("centering_matrix: n must be positive");
    Matrix m(n, n, -1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
    return m;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// Inner dimension is always reduced left to right, so results are
// bit-reproducible for identical inputs.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    c.require_finite("matmul");
    return c;
}

// a^T b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape_string() + " by " +
                         b.shape_string());
    }
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* bk = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
    c.require_finite("matmul_tn");
    return c;
}

// a b^T without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: cannot multiply " + a.shape_string() + " by transpose of " +
                         b.shape_string());
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    c.require_finite("matmul_nt");
    return c;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "add");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    c.require_finite("add");
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "sub");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
    c.require_finite("sub");
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    c.require_finite("scale");
    return c;
}

// a += s * b
inline void axpy(Matrix& a, double s, const Matrix& b) {
    detail::require_same_shape(a, b, "axpy");
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += s * bd[i];
}

inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }
inline Matrix operator*(double s, const Matrix& a) { return scale(a, s); }
inline Matrix operator*(const Matrix& a, double s) { return scale(a, s); }

inline double trace(const Matrix& a) {
    detail::require_square(a, "trace");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

// Frobenius inner product <a, b> = tr(a^T b).
inline double inner(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "inner");
    double s = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
    return s;
}

// (a + a^T) / 2
inline Matrix sym(const Matrix& a) {
    detail::require_square(a, "sym");
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

inline double asymmetry(const Matrix& a) {
    detail::require_square(a, "asymmetry");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - a(j, i);
            s += d * d;
        }
    return std::sqrt(s);
}

// Block (i, j) of the result is a(i, j) * b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            for (std::size_t p = 0; p < b.rows(); ++p)
                for (std::size_t q = 0; q < b.cols(); ++q)
                    k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
    k.require_finite("kron");
    return k;
}

struct QrResult {
    Matrix q; // rows x cols, orthonormal columns
    Matrix r; // cols x cols, upper triangular, positive diagonal
};

// Thin Householder QR with the diagonal of R forced positive, which makes the
// factorization unique. This is qf() of the Stiefel QR retraction.
inline QrResult qr_positive(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) {
        throw ShapeError("qr_positive: need rows >= cols, got " + a.shape_string());
    }
    a.require_finite("qr_positive input");
    const double norm_a = frobenius_norm(a);

    Matrix r = a;
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> v(m - k);
        double alpha = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            v[i - k] = r(i, k);
            alpha += r(i, k) * r(i, k);
        }
        alpha = std::sqrt(alpha);
        if (alpha <= 1e-12 * norm_a || alpha == 0.0) {
            throw SingularityError("qr_positive: input is rank deficient at column " +
                                   std::to_string(k));
        }
        const double sign = v[0] >= 0.0 ? 1.0 : -1.0;
        v[0] += sign * alpha;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 > 0.0) {
            for (std::size_t j = k; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t i = k; i < m; ++i) dot += v[i - k] * r(i, j);
                const double f = 2.0 * dot / vnorm2;
                for (std::size_t i = k; i < m; ++i) r(i, j) -= f * v[i - k];
            }
        }
        reflectors.push_back(std::move(v));
    }

    // Accumulate the thin Q by applying the reflectors to the first n columns
    // of the identity, last reflector first.
    Matrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t kk = n; kk-- > 0;) {
        const auto& v = reflectors[kk];
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = kk; i < m; ++i) dot += v[i - kk] * q(i, j);
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = kk; i < m; ++i) q(i, j) -= f * v[i - kk];
        }
    }

    Matrix rr(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) rr(i, j) = r(i, j);

    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(rr(i, i)) < 1e-12 * norm_a) {
            throw SingularityError("qr_positive: input is rank deficient (|R_" +
                                   std::to_string(i) + std::to_string(i) + "| too small)");
        }
        if (rr(i, i) < 0.0) {
            for (std::size_t j = i; j < n; ++j) rr(i, j) = -rr(i, j);
            for (std::size_t p = 0; p < m; ++p) q(p, i) = -q(p, i);
        }
    }
    return {std::move(q), std::move(rr)};
}

struct EigDecomposition {
    std::vector<double> eigenvalues; // descending
    Matrix eigenvectors;             // column i pairs with eigenvalues[i]
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. Used as a
// reference oracle, not in the training path.
inline EigDecomposition sym_eig(const Matrix& a) {
    detail::require_square(a, "sym_eig");
    a.require_finite("sym_eig input");
    const std::size_t n = a.rows();
    const double scale_a = frobenius_norm(a);
    if (asymmetry(a) > 1e-10 * scale_a) {
        throw ContractError("sym_eig: input is not symmetric");
    }

    Matrix m = sym(a);
    Matrix v = identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        if (std::sqrt(off) <= 1e-15 * std::max(scale_a, 1e-300)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return m(i, i) > m(j, j); });
    EigDecomposition out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        out.eigenvalues[c] = m(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
    }
    return out;
}

// Spectral norm of a symmetric matrix.
inline double spectral_norm_sym(const Matrix& a) {
    const auto eig = sym_eig(a);
    double m = 0.0;
    for (double l : eig.eigenvalues) m = std::max(m, std::abs(l));
    return m;
}

inline double min_eigenvalue(const Matrix& a) {
    const auto eig = sym_eig(a);
    return eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.back();
}

// ---------------------------------------------------------------------------
// Wire format: "IDCP" | version u32 | rows u32 | cols u32 | rows*cols f64,
// all little endian, payload row-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kMatrixFormatVersion = 1;

namespace wire {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b, 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_uint(std::istream& is, int bytes, const char* what) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), bytes);
    if (is.gcount() != bytes) throw DataError(std::string("truncated stream reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
    return static_cast<std::uint32_t>(get_uint(is, 4, what));
}

inline std::uint64_t get_u64(std::istream& is, const char* what) { return get_uint(is, 8, what); }

inline double get_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_u64(is, what));
}

} // namespace wire

inline void write_matrix(std::ostream& os, const Matrix& m) {
    os.write("IDCP", 4);
    wire::put_u32(os, kMatrixFormatVersion);
    wire::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    wire::put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) wire::put_f64(os, v);
}

inline Matrix read_matrix(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "IDCP", 4) != 0) {
        throw DataError("read_matrix: bad magic");
    }
    const auto version = wire::get_u32(is, "matrix version");
    if (version != kMatrixFormatVersion) {
        throw DataError("read_matrix: unsupported version " + std::to_string(version));
    }
    const std::size_t rows = wire::get_u32(is, "matrix rows");
    const std::size_t cols = wire::get_u32(is, "matrix cols");
    if (rows * cols > (std::size_t{1} << 28)) {
        throw DataError("read_matrix: implausible shape " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    std::vector<double> data(rows * cols);
    for (double& v : data) v = wire::get_f64(is, "matrix payload");
    return Matrix(rows, cols, std::move(data));
}

inline std::string to_bytes(const Matrix& m) {
    std::ostringstream os(std::ios::binary);
    write_matrix(os, m);
    return os.str();
}

inline std::ostream& operator<<(std::ostream& os, const Matrix& m) {
    os << '[';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        os << (i ? ", [" : "[");
        for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << m(i, j);
        os << ']';
    }
    return os << ']';
}

} // namespace idccp
