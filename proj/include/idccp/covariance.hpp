#pragma once

#include <cstddef>
#include <string>

#include "idccp/backbone.hpp"
#include "idccp/error.hpp"
#include "idccp/group_d4.hpp"
#include "idccp/linalg.hpp"

namespace idccp {

// Symmetric positive (semi)definite matrix. Construction checks symmetry to
// 1e-10 relative; positivity is the producer's responsibility.
class SpdMatrix {
public:
    SpdMatrix() = default;

    explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) {
            throw ShapeError("SpdMatrix: matrix must be square, got " + m_.shape_string());
        }
        m_.require_finite("SpdMatrix");
        if (asymmetry(m_) > 1e-10 * frobenius_norm(m_)) {
            throw ContractError("SpdMatrix: matrix is not symmetric");
        }
    }

    std::size_t dim() const noexcept { return m_.rows(); }
    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }

    friend bool operator==(const SpdMatrix&, const SpdMatrix&) = default;

private:
    Matrix m_;
};

// Feature columns minus their mean, i.e. F * Ibar.
inline Matrix center_columns(const Matrix& f) {
    Matrix c = f;
    const double inv_n = 1.0 / static_cast<double>(f.cols());
    for (std::size_t i = 0; i < f.rows(); ++i) {
        auto r = c.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean *= inv_n;
        for (double& v : r) v -= mean;
    }
    return c;
}

// Sigma = (1/n) F Ibar F^T for a d x n feature matrix.
inline SpdMatrix covariance(const Matrix& f) {
    if (f.cols() < 2) {
        throw ShapeError("covariance: need at least 2 feature vectors, got " +
                         std::to_string(f.cols()));
    }
    const Matrix fc = center_columns(f);
    return SpdMatrix(scale(matmul_nt(fc, fc), 1.0 / static_cast<double>(f.cols())));
}

enum class PoolingMode {
    group_average,  // trivial projection: mean over all eight branches
    identity_only,  // ablation: branch e alone, no invariance guarantee
};

// Trivial projection of the orbit of branch covariances, (1/8) sum_g Sigma_g,
// reduced in fixed group order.
inline SpdMatrix group_average_covariance(const FeatureStack& stack,
                                          PoolingMode mode = PoolingMode::group_average) {
    const Matrix& f0 = stack[0];
    for (auto g : d4::kElements) {
        const Matrix& f = stack[d4::index(g)];
        if (f.empty()) {
            throw ShapeError("group_average_covariance: branch " + std::string(d4::name(g)) +
                             " is missing");
        }
        if (f.rows() != f0.rows() || f.cols() != f0.cols()) {
            throw ShapeError("group_average_covariance: branch " + std::string(d4::name(g)) +
                             " has shape " + f.shape_string() + ", expected " + f0.shape_string());
        }
    }
    if (mode == PoolingMode::identity_only) return covariance(f0);
    Matrix sum(f0.rows(), f0.rows());
    for (auto g : d4::kElements) axpy(sum, 1.0, covariance(stack[d4::index(g)]).matrix());
    return SpdMatrix(scale(sum, 1.0 / static_cast<double>(d4::kOrder)));
}

// Sigma + eps * (tr(Sigma)/d + 1e-12) I
inline SpdMatrix regularize(const SpdMatrix& sigma, double eps_scale = 1e-5) {
    if (!(eps_scale > 0.0)) throw ContractError("regularize: eps_scale must be positive");
    Matrix m = sigma.matrix();
    const double shift =
        eps_scale * (trace(m) / static_cast<double>(m.rows()) + 1e-12);
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += shift;
    return SpdMatrix(std::move(m));
}

// Adjoint of covariance(): dl/dF = (1/n) (G + G^T) F Ibar.
inline Matrix covariance_backward_single(const Matrix& f, const Matrix& grad_sigma) {
    if (grad_sigma.rows() != f.rows() || grad_sigma.cols() != f.rows()) {
        throw ShapeError("covariance_backward: gradient " + grad_sigma.shape_string() +
                         " does not match feature dim " + std::to_string(f.rows()));
    }
    const Matrix gs = add(grad_sigma, transpose(grad_sigma));
    return scale(matmul(gs, center_columns(f)), 1.0 / static_cast<double>(f.cols()));
}

// Per-branch gradients of group_average_covariance.
inline FeatureStack covariance_backward(const FeatureStack& stack, const Matrix& grad_sigma,
                                        PoolingMode mode = PoolingMode::group_average) {
    FeatureStack out;
    if (mode == PoolingMode::identity_only) {
        for (auto g : d4::kElements) {
            const Matrix& f = stack[d4::index(g)];
            out[d4::index(g)] = Matrix(f.rows(), f.cols());
        }
        out[0] = covariance_backward_single(stack[0], grad_sigma);
        return out;
    }
    const double w = 1.0 / static_cast<double>(d4::kOrder);
    for (auto g : d4::kElements)
        out[d4::index(g)] = scale(covariance_backward_single(stack[d4::index(g)], grad_sigma), w);
    return out;
}

} // namespace idccp
