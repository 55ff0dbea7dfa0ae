#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "idccp/backbone.hpp"
#include "idccp/classifier.hpp"
#include "idccp/covariance.hpp"
#include "idccp/isqrt.hpp"
#include "idccp/stiefel.hpp"

namespace idccp {

// Everything a trained model carries.
struct Model {
    ConvNetParams backbone;
    std::optional<StiefelMatrix> w; // empty: no compression, C_hat is the d x d root
    ClassifierWeights classifier;

    std::size_t feature_dim() const noexcept { return backbone.feature_dim(); }
    std::size_t compressed_dim() const noexcept { return w ? w->d_hat() : feature_dim(); }

    friend bool operator==(const Model&, const Model&) = default;
};

struct PipelineOptions {
    double epsilon_scale = 1e-5;
    std::size_t newton_schulz_iters = 5;
    PoolingMode pooling = PoolingMode::group_average;
};

// Forward intermediates of one image, kept for the backward pass.
struct SampleForward {
    StackOutput stack;
    SpdMatrix sigma;     // regularized group-averaged covariance
    SpdMatrix sigma_hat; // W^T sigma W, or sigma without compression
    NewtonSchulzResult sqrt;
    std::vector<double> logits;
};

struct SampleGradients {
    ConvNetGrads backbone;
    Matrix w_euclidean; // dl/dW, before tangent projection; empty without compression
};

namespace detail {

// Runs one pipeline stage; any non-finite value is reported with the stage
// name so training can say where it diverged.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const NonFiniteError& e) {
        throw DivergenceError(std::string("non-finite values in ") + name + " (" + e.what() + ")");
    }
}

inline void require_finite(const Matrix& m, const char* name) {
    if (!m.all_finite()) throw DivergenceError(std::string("non-finite values in ") + name);
}

} // namespace detail

// image -> D4 stack -> group-averaged covariance -> regularize -> compress ->
// Newton-Schulz square root -> trace-form logits.
inline SampleForward pipeline_forward(const Model& model, const PipelineOptions& opts,
                                      const ImageTensor& img) {
    SampleForward f;
    f.stack = detail::stage("backbone features", [&] { return forward_stack(model.backbone, img); });
    for (const auto& b : f.stack.features) detail::require_finite(b, "backbone features");
    f.sigma = detail::stage("covariance", [&] {
        return regularize(group_average_covariance(f.stack.features, opts.pooling),
                          opts.epsilon_scale);
    });
    f.sigma_hat = model.w ? detail::stage("compressed covariance",
                                          [&] { return compress(f.sigma, *model.w); })
                          : f.sigma;
    f.sqrt = detail::stage("square-root normalization", [&] {
        return newton_schulz_sqrt(f.sigma_hat, opts.newton_schulz_iters);
    });
    f.logits = logits(f.sqrt.c_hat, model.classifier);
    for (double z : f.logits)
        if (!std::isfinite(z)) throw DivergenceError("non-finite values in logits");
    return f;
}

inline std::vector<double> pipeline_logits(const Model& model, const PipelineOptions& opts,
                                           const ImageTensor& img) {
    return pipeline_forward(model, opts, img).logits;
}

// Gradients of the backbone and W given dl/dC_hat for one sample.
inline SampleGradients pipeline_backward(const Model& model, const PipelineOptions& opts,
                                         const SampleForward& f, const Matrix& grad_c_hat) {
    SampleGradients g;
    const Matrix g_sigma_hat = detail::stage("square-root backward", [&] {
        return newton_schulz_backward(f.sqrt.tape, grad_c_hat);
    });
    Matrix g_sigma = g_sigma_hat;
    if (model.w) {
        g.w_euclidean = detail::stage("W gradient", [&] {
            return euclidean_grad(f.sigma, *model.w, g_sigma_hat);
        });
        g_sigma = detail::stage("compression backward", [&] {
            return sigma_backward(*model.w, g_sigma_hat);
        });
    }
    // The regularizer's trace term is part of the forward map.
    const double d = static_cast<double>(g_sigma.rows());
    double diag_sum = 0.0;
    for (std::size_t i = 0; i < g_sigma.rows(); ++i) diag_sum += g_sigma(i, i);
    const double shift = opts.epsilon_scale * diag_sum / d;
    for (std::size_t i = 0; i < g_sigma.rows(); ++i) g_sigma(i, i) += shift;

    const FeatureStack g_feat = detail::stage("covariance backward", [&] {
        return covariance_backward(f.stack.features, g_sigma, opts.pooling);
    });
    g.backbone = detail::stage("backbone backward", [&] {
        return backward_stack(model.backbone, f.stack.tapes, g_feat).params;
    });
    return g;
}

} // namespace idccp
