#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "idccp/covariance.hpp"
#include "idccp/error.hpp"
#include "idccp/linalg.hpp"

namespace idccp {

// Intermediates of one forward pass. c[j], d[j] for j = 0..J, with
// c[0] = Sigma_hat / tr(Sigma_hat) and d[0] = I.
struct NewtonSchulzTape {
    std::vector<Matrix> c;
    std::vector<Matrix> d;
    double trace_value = 0.0;
    std::size_t iterations = 0;
};

struct NewtonSchulzResult {
    SpdMatrix c_hat;
    NewtonSchulzTape tape;
};

// Coupled Newton-Schulz square root with trace pre-normalization and
// post-compensation:
//   T_j = 3I - D_{j-1} C_{j-1}
//   C_j = 1/2 C_{j-1} T_j,  D_j = 1/2 T_j D_{j-1}
//   C_hat = sqrt(tr(Sigma_hat)) C_J
// Every iterate is re-symmetrized.
inline NewtonSchulzResult newton_schulz_sqrt(const SpdMatrix& sigma_hat, std::size_t iterations = 5) {
    if (iterations < 1) throw ContractError("newton_schulz_sqrt: need at least one iteration");
    const Matrix& s = sigma_hat.matrix();
    const double tr = trace(s);
    if (!(tr > 0.0)) {
        throw ContractError("newton_schulz_sqrt: trace must be positive, got " + std::to_string(tr));
    }
    const std::size_t n = s.rows();
    const Matrix eye3 = scale(identity(n), 3.0);

    NewtonSchulzTape tape;
    tape.trace_value = tr;
    tape.iterations = iterations;
    tape.c.reserve(iterations + 1);
    tape.d.reserve(iterations + 1);
    tape.c.push_back(scale(s, 1.0 / tr));
    tape.d.push_back(identity(n));
    for (std::size_t j = 1; j <= iterations; ++j) {
        const Matrix& cp = tape.c.back();
        const Matrix& dp = tape.d.back();
        const Matrix t = sub(eye3, matmul(dp, cp));
        Matrix c = sym(scale(matmul(cp, t), 0.5));
        Matrix d = sym(scale(matmul(t, dp), 0.5));
        if (!c.all_finite() || !d.all_finite()) {
            throw NonFiniteError("newton_schulz_sqrt: iterate " + std::to_string(j) + " diverged");
        }
        tape.c.push_back(std::move(c));
        tape.d.push_back(std::move(d));
    }
    SpdMatrix c_hat(scale(tape.c.back(), std::sqrt(tr)));
    return {std::move(c_hat), std::move(tape)};
}

// Reverse-mode pass through the unrolled iteration and the trace
// normalization. Returns the symmetric gradient w.r.t. Sigma_hat.
inline Matrix newton_schulz_backward(const NewtonSchulzTape& tape, const Matrix& grad_c_hat) {
    if (tape.c.size() != tape.iterations + 1 || tape.d.size() != tape.iterations + 1 ||
        tape.c.empty()) {
        throw ShapeError("newton_schulz_backward: malformed tape");
    }
    const std::size_t n = tape.c[0].rows();
    if (grad_c_hat.rows() != n || grad_c_hat.cols() != n) {
        throw ShapeError("newton_schulz_backward: gradient " + grad_c_hat.shape_string() +
                         " does not match tape dim " + std::to_string(n));
    }
    const double tr = tape.trace_value;
    const double root = std::sqrt(tr);
    const Matrix eye3 = scale(identity(n), 3.0);

    // C_hat = sqrt(tr) C_J
    Matrix gc = scale(grad_c_hat, root);
    double g_trace = inner(grad_c_hat, tape.c.back()) / (2.0 * root);
    Matrix gd(n, n);

    for (std::size_t j = tape.iterations; j >= 1; --j) {
        const Matrix& cp = tape.c[j - 1];
        const Matrix& dp = tape.d[j - 1];
        const Matrix t = sub(eye3, matmul(dp, cp));
        // Through the symmetrization.
        const Matrix gcj = sym(gc);
        const Matrix gdj = sym(gd);
        // C_j = 1/2 C_{j-1} T
        Matrix gc_prev = scale(matmul_nt(gcj, t), 0.5);
        Matrix gt = scale(matmul_tn(cp, gcj), 0.5);
        // D_j = 1/2 T D_{j-1}
        axpy(gt, 0.5, matmul_nt(gdj, dp));
        Matrix gd_prev = scale(matmul_tn(t, gdj), 0.5);
        // T = 3I - D_{j-1} C_{j-1}
        axpy(gd_prev, -1.0, matmul_nt(gt, cp));
        axpy(gc_prev, -1.0, matmul_tn(dp, gt));
        gc = std::move(gc_prev);
        gd = std::move(gd_prev);
    }

    // C_0 = Sigma_hat / tr, tr = trace(Sigma_hat); D_0 = I is constant.
    const Matrix sigma_hat = scale(tape.c[0], tr);
    g_trace -= inner(gc, sigma_hat) / (tr * tr);
    Matrix g = scale(gc, 1.0 / tr);
    for (std::size_t i = 0; i < n; ++i) g(i, i) += g_trace;
    return sym(g);
}

// || I - Sigma_hat / tr(Sigma_hat) ||_2. Below 1 for any PD input; values near
// 1 signal slow convergence.
inline double convergence_check(const SpdMatrix& sigma_hat) {
    const Matrix& s = sigma_hat.matrix();
    const double tr = trace(s);
    if (!(tr > 0.0)) throw ContractError("convergence_check: trace must be positive");
    return spectral_norm_sym(sub(identity(s.rows()), scale(s, 1.0 / tr)));
}

} // namespace idccp
