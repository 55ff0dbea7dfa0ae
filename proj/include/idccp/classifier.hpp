#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idccp/covariance.hpp"
#include "idccp/error.hpp"
#include "idccp/linalg.hpp"

namespace idccp {

// One d_hat x d_hat weight matrix and one bias per class.
struct ClassifierWeights {
    std::vector<Matrix> w;
    std::vector<double> b;

    static ClassifierWeights zeros(std::size_t classes, std::size_t d_hat) {
        return {std::vector<Matrix>(classes, Matrix(d_hat, d_hat)),
                std::vector<double>(classes, 0.0)};
    }

    std::size_t classes() const noexcept { return w.size(); }
    std::size_t dim() const noexcept { return w.empty() ? 0 : w.front().rows(); }
    std::size_t parameter_count() const noexcept { return classes() * (dim() * dim() + 1); }

    friend bool operator==(const ClassifierWeights&, const ClassifierWeights&) = default;
};

struct LossReport {
    double data_loss = 0.0;
    double reg_loss = 0.0;
    double total = 0.0;
    std::vector<std::vector<double>> logits; // per sample
};

struct LabeledFeature {
    const SpdMatrix* c_hat;
    std::size_t label; // 0-based class index
};

struct ClassifierGradients {
    LossReport report;
    ClassifierWeights weight_grads;
    std::vector<Matrix> grad_c_hat; // per sample, already divided by the batch size
};

// logit_k = tr(W_k^T C_hat) + b_k
inline std::vector<double> logits(const SpdMatrix& c_hat, const ClassifierWeights& weights) {
    std::vector<double> out(weights.classes());
    for (std::size_t k = 0; k < weights.classes(); ++k) {
        if (weights.w[k].rows() != c_hat.dim() || weights.w[k].cols() != c_hat.dim()) {
            throw ShapeError("logits: weight " + weights.w[k].shape_string() +
                             " does not match feature dim " + std::to_string(c_hat.dim()));
        }
        out[k] = inner(weights.w[k], c_hat.matrix()) + weights.b[k];
    }
    return out;
}

// Softmax probabilities, computed with the max logit subtracted.
inline std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.size());
    if (z.empty()) return p;
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - zmax);
        s += p[k];
    }
    for (double& v : p) v /= s;
    return p;
}

// Mean softmax cross-entropy over the batch plus (lambda/2) sum_k ||W_k||_F^2.
inline ClassifierGradients loss_and_grads(std::span<const LabeledFeature> batch,
                                          const ClassifierWeights& weights, double lambda) {
    if (batch.empty()) throw DataError("loss_and_grads: empty batch");
    if (lambda < 0.0) throw ContractError("loss_and_grads: lambda must be nonnegative");
    const std::size_t classes = weights.classes();
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    ClassifierGradients out;
    out.weight_grads = ClassifierWeights::zeros(classes, weights.dim());
    std::vector<Matrix> sym_w;
    sym_w.reserve(classes);
    for (const auto& w : weights.w) sym_w.push_back(sym(w));

    for (const auto& s : batch) {
        if (s.label >= classes) {
            throw DataError("loss_and_grads: label " + std::to_string(s.label) +
                            " out of range for " + std::to_string(classes) + " classes");
        }
        auto z = logits(*s.c_hat, weights);
        const auto p = softmax(z);
        const double zmax = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - zmax);
        lse = zmax + std::log(lse);
        out.report.data_loss += (lse - z[s.label]) * inv_n;

        Matrix gc(weights.dim(), weights.dim());
        for (std::size_t k = 0; k < classes; ++k) {
            const double dz = (p[k] - (k == s.label ? 1.0 : 0.0)) * inv_n;
            axpy(out.weight_grads.w[k], dz, s.c_hat->matrix());
            out.weight_grads.b[k] += dz;
            axpy(gc, dz, sym_w[k]);
        }
        out.grad_c_hat.push_back(std::move(gc));
        out.report.logits.push_back(std::move(z));
    }
    for (std::size_t k = 0; k < classes; ++k) {
        const double nrm = frobenius_norm(weights.w[k]);
        out.report.reg_loss += 0.5 * lambda * nrm * nrm;
        axpy(out.weight_grads.w[k], lambda, weights.w[k]);
    }
    out.report.total = out.report.data_loss + out.report.reg_loss;
    return out;
}

// argmax with ties going to the lowest index.
inline std::size_t argmax(std::span<const double> z) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
        if (z[k] > z[best]) best = k;
    return best;
}

inline std::size_t predict(const SpdMatrix& c_hat, const ClassifierWeights& weights) {
    return argmax(logits(c_hat, weights));
}

} // namespace idccp
