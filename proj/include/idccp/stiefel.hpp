#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "idccp/covariance.hpp"
#include "idccp/error.hpp"
#include "idccp/linalg.hpp"
#include "idccp/rng.hpp"

namespace idccp {

// || W^T W - I ||_F
inline double orthonormality_error(const Matrix& w) {
    return frobenius_norm(sub(matmul_tn(w, w), identity(w.cols())));
}

// A d x d_hat frame with orthonormal columns, d_hat < d.
class StiefelMatrix {
public:
    static constexpr double kTolerance = 1e-8;

    StiefelMatrix() = default;

    explicit StiefelMatrix(Matrix w) : w_(std::move(w)) {
        if (w_.cols() == 0 || w_.cols() >= w_.rows()) {
            throw ConfigError("StiefelMatrix: need 1 <= d_hat < d, got " + w_.shape_string());
        }
        const double err = orthonormality_error(w_);
        if (err > kTolerance) {
            throw ContractError("StiefelMatrix: columns not orthonormal (error " +
                                std::to_string(err) + ")");
        }
    }

    std::size_t d() const noexcept { return w_.rows(); }
    std::size_t d_hat() const noexcept { return w_.cols(); }
    const Matrix& matrix() const noexcept { return w_; }

    friend bool operator==(const StiefelMatrix&, const StiefelMatrix&) = default;

private:
    Matrix w_;
};

struct TangentVector {
    Matrix v;
};

// Q factor of a seeded Gaussian d x d_hat matrix.
inline StiefelMatrix init_stiefel(std::size_t d, std::size_t d_hat, std::uint64_t seed) {
    if (d_hat < 1 || d_hat >= d) {
        throw ConfigError("init_stiefel: need 1 <= d_hat < d, got d=" + std::to_string(d) +
                          " d_hat=" + std::to_string(d_hat));
    }
    Rng rng(seed);
    Matrix a(d, d_hat);
    for (double& v : a.data()) v = rng.normal();
    return StiefelMatrix(qr_positive(a).q);
}

// Sigma_hat = W^T Sigma W.
inline SpdMatrix compress(const SpdMatrix& sigma, const StiefelMatrix& w) {
    if (sigma.dim() != w.d()) {
        throw ShapeError("compress: covariance dim " + std::to_string(sigma.dim()) +
                         " does not match W " + w.matrix().shape_string());
    }
    return SpdMatrix(sym(matmul_tn(w.matrix(), matmul(sigma.matrix(), w.matrix()))));
}

// dl/dW = 2 Sigma W sym(dl/dSigma_hat).
inline Matrix euclidean_grad(const SpdMatrix& sigma, const StiefelMatrix& w,
                             const Matrix& grad_sigma_hat) {
    if (grad_sigma_hat.rows() != w.d_hat() || grad_sigma_hat.cols() != w.d_hat()) {
        throw ShapeError("euclidean_grad: gradient " + grad_sigma_hat.shape_string() +
                         " does not match d_hat " + std::to_string(w.d_hat()));
    }
    if (sigma.dim() != w.d()) {
        throw ShapeError("euclidean_grad: covariance dim does not match W");
    }
    return scale(matmul(matmul(sigma.matrix(), w.matrix()), sym(grad_sigma_hat)), 2.0);
}

// Projection onto the tangent space at W: V = G - W G^T W.
inline TangentVector riemannian_grad(const StiefelMatrix& w, const Matrix& eucl_grad) {
    const Matrix& wm = w.matrix();
    if (eucl_grad.rows() != wm.rows() || eucl_grad.cols() != wm.cols()) {
        throw ShapeError("riemannian_grad: gradient " + eucl_grad.shape_string() +
                         " does not match W " + wm.shape_string());
    }
    return {sub(eucl_grad, matmul(wm, matmul_tn(eucl_grad, wm)))};
}

// qf(W - eta V). A rank-deficient step is retried with eta halved, up to 10
// times, before RetractionError is thrown.
inline StiefelMatrix retract(const StiefelMatrix& w, const TangentVector& v, double eta) {
    if (!(eta > 0.0)) throw ContractError("retract: eta must be positive");
    for (int attempt = 0; attempt <= 10; ++attempt) {
        try {
            Matrix step = w.matrix();
            axpy(step, -eta, v.v);
            return StiefelMatrix(qr_positive(step).q);
        } catch (const SingularityError&) {
            eta *= 0.5;
        } catch (const NonFiniteError&) {
            eta *= 0.5;
        }
    }
    throw RetractionError("retract: W - eta V stayed rank deficient after 10 step halvings");
}

// Adjoint of compress() in Sigma: W sym(dl/dSigma_hat) W^T.
inline Matrix sigma_backward(const StiefelMatrix& w, const Matrix& grad_sigma_hat) {
    if (grad_sigma_hat.rows() != w.d_hat() || grad_sigma_hat.cols() != w.d_hat()) {
        throw ShapeError("sigma_backward: gradient " + grad_sigma_hat.shape_string() +
                         " does not match d_hat " + std::to_string(w.d_hat()));
    }
    return sym(matmul_nt(matmul(w.matrix(), sym(grad_sigma_hat)), w.matrix()));
}

} // namespace idccp
