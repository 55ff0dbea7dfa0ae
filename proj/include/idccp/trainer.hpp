#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "idccp/checkpoint.hpp"
#include "idccp/classifier.hpp"
#include "idccp/config.hpp"
#include "idccp/dataset.hpp"
#include "idccp/error.hpp"
#include "idccp/pipeline.hpp"
#include "idccp/stiefel.hpp"

namespace idccp {

struct EvalMetrics {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
    double mean_loss = 0.0;
    // Mean over probed samples of max_g ||z(x) - z(T_g x)||_inf / (1 + ||z(x)||_inf).
    double invariance_error = 0.0;
    std::size_t samples = 0;
};

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based
    double learning_rate = 0.0;
    double loss = 0.0;     // mean training objective over the epoch
    double accuracy = 0.0; // held-out
    double invariance_error = 0.0;
    double seconds = 0.0;
};

inline PipelineOptions pipeline_options(const TrainConfig& c) {
    return {c.epsilon_scale, c.newton_schulz_iters, c.pooling};
}

// Relative logit deviation of one image, maximized over the seven non-identity
// group elements.
inline double invariance_deviation(const Model& model, const PipelineOptions& opts,
                                   const ImageTensor& img) {
    const auto z0 = pipeline_logits(model, opts, img);
    double zmax = 0.0;
    for (double v : z0) zmax = std::max(zmax, std::abs(v));
    double worst = 0.0;
    for (auto g : d4::kElements) {
        if (g == d4::GroupElement::e) continue;
        const auto zg = pipeline_logits(model, opts, d4::act_on_image(g, img));
        for (std::size_t k = 0; k < z0.size(); ++k) worst = std::max(worst, std::abs(z0[k] - zg[k]));
    }
    return worst / (1.0 + zmax);
}

// Accuracy, confusion matrix, and loss on the listed samples; the invariance
// error is measured on the first `invariance_samples` of them.
inline EvalMetrics evaluate(const Model& model, const PipelineOptions& opts, const Dataset& ds,
                            const std::vector<std::size_t>& indices, std::size_t invariance_samples) {
    const std::size_t k = model.classifier.classes();
    if (ds.classes() != k) {
        throw ConfigError("evaluate: dataset has " + std::to_string(ds.classes()) +
                          " classes but the model has " + std::to_string(k));
    }
    if (indices.empty()) throw DataError("evaluate: empty dataset");
    EvalMetrics m;
    m.samples = indices.size();
    m.confusion.assign(k, std::vector<std::size_t>(k, 0));
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        const auto& s = ds.samples.at(i);
        const auto z = pipeline_logits(model, opts, s.image);
        const std::size_t pred = argmax(z);
        ++m.confusion[s.label][pred];
        if (pred == s.label) ++correct;
        const double zmax = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double v : z) lse += std::exp(v - zmax);
        m.mean_loss += zmax + std::log(lse) - z[s.label];
    }
    m.mean_loss /= static_cast<double>(indices.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    m.per_class_accuracy.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t total = std::accumulate(m.confusion[c].begin(), m.confusion[c].end(), std::size_t{0});
        if (total > 0) m.per_class_accuracy[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(total);
    }
    const std::size_t probes = std::min(invariance_samples, indices.size());
    for (std::size_t i = 0; i < probes; ++i)
        m.invariance_error += invariance_deviation(model, opts, ds.samples[indices[i]].image);
    if (probes > 0) m.invariance_error /= static_cast<double>(probes);
    return m;
}

inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
    const double base = (c.schedule == LrSchedule::two_phase && epoch >= c.head_epochs) ? c.lr_finetune
                                                                                         : c.lr_initial;
    const std::size_t start = c.schedule == LrSchedule::two_phase && epoch >= c.head_epochs ? c.head_epochs : 0;
    const auto steps = static_cast<double>((epoch - start) / c.lr_decay_every_epochs);
    return base * std::pow(c.lr_decay_factor, steps);
}

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> history;
    EvalMetrics final_metrics;
};

using EpochCallback = std::function<void(const Checkpoint&, const EpochMetrics&)>;

namespace detail {

inline void require_finite_param(const Matrix& m, const std::string& name) {
    if (!m.all_finite()) throw DivergenceError("non-finite values in " + name);
}

// v <- mu v + g; p <- p - lr v
inline void momentum_step(Matrix& p, Matrix& v, const Matrix& g, double mu, double lr) {
    for (std::size_t i = 0; i < p.data().size(); ++i) {
        v.data()[i] = mu * v.data()[i] + g.data()[i];
        p.data()[i] -= lr * v.data()[i];
    }
}

} // namespace detail

// One pass over `order` in mini-batches. Returns the mean training objective.
inline double train_epoch(const TrainConfig& config, TrainState& state, const Dataset& ds,
                          const std::vector<std::size_t>& order, double lr, bool freeze_backbone) {
    const auto opts = pipeline_options(config);
    Model& model = state.model;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<SampleForward> fwd;
        std::vector<LabeledFeature> batch;
        fwd.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            const auto& s = ds.samples[order[i]];
            const ImageTensor img = (config.augment_flip || config.augment_crop)
                                        ? augment(s.image, config.augment_flip, config.augment_crop, state.rng)
                                        : s.image;
            fwd.push_back(pipeline_forward(model, opts, img));
        }
        for (std::size_t i = start; i < end; ++i) batch.push_back({&fwd[i - start].sqrt.c_hat, ds.samples[order[i]].label});
        auto cls = loss_and_grads(batch, model.classifier, config.weight_decay);
        if (!std::isfinite(cls.report.total)) {
            throw DivergenceError("non-finite loss at epoch " + std::to_string(state.epoch + 1));
        }
        loss_sum += cls.report.total * static_cast<double>(end - start);

        ConvNetGrads g_backbone = ConvNetGrads::zeros_like(model.backbone);
        Matrix g_w = model.w ? Matrix(model.w->d(), model.w->d_hat()) : Matrix();
        for (std::size_t i = 0; i < fwd.size(); ++i) {
            const auto sg = pipeline_backward(model, opts, fwd[i], cls.grad_c_hat[i]);
            g_backbone.accumulate(sg.backbone);
            if (model.w) axpy(g_w, 1.0, sg.w_euclidean);
        }

        if (config.grad_clip > 0.0) {
            double sq = 0.0;
            auto add = [&](const Matrix& m) {
                for (double v : m.data()) sq += v * v;
            };
            for (const auto& m : cls.weight_grads.w) add(m);
            for (double b : cls.weight_grads.b) sq += b * b;
            if (!freeze_backbone) {
                for (const auto& m : g_backbone.kernels) add(m);
                for (const auto& m : g_backbone.biases) add(m);
            }
            if (model.w) add(g_w);
            const double norm = std::sqrt(sq);
            if (norm > config.grad_clip) {
                const double f = config.grad_clip / norm;
                for (auto& m : cls.weight_grads.w) m = scale(m, f);
                for (double& b : cls.weight_grads.b) b *= f;
                for (auto& m : g_backbone.kernels) m = scale(m, f);
                for (auto& m : g_backbone.biases) m = scale(m, f);
                if (model.w) g_w = scale(g_w, f);
            }
        }

        const double mu = config.momentum;
        for (std::size_t k = 0; k < model.classifier.classes(); ++k) {
            detail::momentum_step(model.classifier.w[k], state.classifier_velocity.w[k],
                                  cls.weight_grads.w[k], mu, lr);
            auto& vb = state.classifier_velocity.b[k];
            vb = mu * vb + cls.weight_grads.b[k];
            model.classifier.b[k] -= lr * vb;
            detail::require_finite_param(model.classifier.w[k], "classifier weight " + std::to_string(k));
        }
        if (!freeze_backbone) {
            for (std::size_t l = 0; l < model.backbone.convs.size(); ++l) {
                auto& conv = model.backbone.convs[l];
                axpy(g_backbone.kernels[l], config.weight_decay, conv.kernels);
                detail::momentum_step(conv.kernels, state.backbone_velocity.kernels[l], g_backbone.kernels[l], mu, lr);
                detail::momentum_step(conv.bias, state.backbone_velocity.biases[l], g_backbone.biases[l], mu, lr);
                detail::require_finite_param(conv.kernels, "backbone conv " + std::to_string(l) + " kernels");
                detail::require_finite_param(conv.bias, "backbone conv " + std::to_string(l) + " bias");
            }
        }
        if (model.w) {
            detail::require_finite_param(g_w, "W gradient");
            model.w = retract(*model.w, riemannian_grad(*model.w, g_w), lr);
        }
    }
    return loss_sum / static_cast<double>(order.size());
}

// Trains from `start` (fresh when empty) up to config.epochs. The config of a
// resumed run must match the checkpoint's.
inline TrainResult train(const TrainConfig& config, const Dataset& ds,
                         std::optional<Checkpoint> start = std::nullopt,
                         const EpochCallback& on_epoch = {}) {
    validate(config);
    if (ds.classes() != config.classes) {
        throw ConfigError("dataset has " + std::to_string(ds.classes()) + " classes but config says " +
                          std::to_string(config.classes));
    }
    const Split split = stratified_split(ds, config.train_ratio, config.seed);
    for (std::size_t k = 0; k < ds.classes(); ++k) {
        const auto n = std::count_if(split.train.begin(), split.train.end(),
                                     [&](std::size_t i) { return ds.samples[i].label == k; });
        if (n < 1) throw DataError("class '" + ds.class_names[k] + "' has no training samples");
    }
    if (split.test.empty()) throw DataError("held-out split is empty");

    TrainResult result;
    if (start) {
        if (!(start->config == config)) throw ConfigError("resume: checkpoint config differs from the run config");
        result.checkpoint = std::move(*start);
    } else {
        result.checkpoint = {config, init_state(config)};
    }
    TrainState& state = result.checkpoint.state;
    const auto opts = pipeline_options(config);

    while (state.epoch < config.epochs) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t e = state.epoch;
        const double lr = learning_rate(config, e);
        const bool freeze = config.schedule == LrSchedule::two_phase && e < config.head_epochs;
        std::vector<std::size_t> order = split.train;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);

        EpochMetrics em;
        em.epoch = e + 1;
        em.learning_rate = lr;
        em.loss = train_epoch(config, state, ds, order, lr, freeze);
        ++state.epoch;
        if (state.model.w && orthonormality_error(state.model.w->matrix()) > StiefelMatrix::kTolerance) {
            throw ContractError("W left the Stiefel manifold after epoch " + std::to_string(em.epoch));
        }
        const auto ev = evaluate(state.model, opts, ds, split.test, config.invariance_samples);
        em.accuracy = ev.accuracy;
        em.invariance_error = ev.invariance_error;
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(em);
        if (on_epoch) on_epoch(result.checkpoint, em);
    }
    result.final_metrics = evaluate(state.model, opts, ds, split.test, config.invariance_samples);
    return result;
}

inline std::string metrics_csv_header() { return "epoch,loss,accuracy,invariance_error\n"; }

inline std::string metrics_csv_row(const EpochMetrics& m) {
    std::ostringstream os;
    os.precision(17);
    os << m.epoch << ',' << m.loss << ',' << m.accuracy << ',' << m.invariance_error << '\n';
    return os.str();
}

inline void print_eval(std::ostream& os, const EvalMetrics& m, const std::vector<std::string>& names) {
    os << "samples: " << m.samples << "\n";
    os << "accuracy: " << m.accuracy << "\n";
    os << "mean loss: " << m.mean_loss << "\n";
    os << "invariance error: " << m.invariance_error << "\n";
    os << "per-class accuracy:\n";
    for (std::size_t k = 0; k < m.per_class_accuracy.size(); ++k)
        os << "  " << (k < names.size() ? names[k] : std::to_string(k)) << ": " << m.per_class_accuracy[k] << "\n";
    os << "confusion (rows true, columns predicted):\n";
    for (const auto& row : m.confusion) {
        os << " ";
        for (std::size_t v : row) os << ' ' << v;
        os << "\n";
    }
}

// ---------------------------------------------------------------------------
// Parameter and complexity accounting
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string method;
    std::size_t feature_dim = 0;        // length of the vectorized second-order feature
    std::size_t feature_params = 0;     // projection layer weights
    std::size_t classifier_params = 0;  // per class
    std::string feature_complexity;
    std::string classifier_complexity;
};

struct ModelReport {
    std::size_t d = 0;     // channels entering the projection layer
    std::size_t d_p = 0;   // projection output (covariance size)
    std::size_t d_hat = 0; // compressed size
    std::size_t classes = 0;
    std::vector<ReportRow> rows;
    double reduction_factor = 1.0; // (d_p / d_hat)^2
    std::size_t total_model_params = 0; // this model, all trainable values
};

// Bilinear pooling without projection, uncompressed with projection, and
// compressed with projection; counts are floats.
inline ModelReport model_report(std::size_t d, std::size_t d_p, std::size_t d_hat, std::size_t classes) {
    if (d_hat < 1 || d_hat > d_p) throw ConfigError("model_report: need 1 <= d_hat <= d_p");
    ModelReport r{d, d_p, d_hat, classes, {}, 0.0, 0};
    r.rows.push_back({"bilinear (no projection)", d * d, 0, d * d, "O(hw d^2)", "O(K d^2)"});
    r.rows.push_back({"projected, uncompressed", d_p * d_p, d * d_p, d_p * d_p, "O(hw d d_p + hw d_p^2)",
                      "O(K d_p^2)"});
    r.rows.push_back({"projected, compressed", d_hat * d_hat, d * d_p, d_hat * d_hat,
                      "O(hw d d_p + hw d_hat^2)", "O(K d_hat^2)"});
    const double ratio = static_cast<double>(d_p) / static_cast<double>(d_hat);
    r.reduction_factor = ratio * ratio;
    return r;
}

inline ModelReport model_report(const TrainConfig& config) {
    validate(config);
    const auto layers = parse_layer_specs(config.backbone_spec());
    Rng rng(0);
    const auto backbone = init_backbone(config.channels, layers, rng);
    auto r = model_report(backbone.projection_input_dim(), config.feature_dim, config.compressed_dim,
                          config.classes);
    r.total_model_params = backbone.parameter_count() +
                           (config.compressed_dim < config.feature_dim ? config.feature_dim * config.compressed_dim : 0) +
                           config.classes * (config.compressed_dim * config.compressed_dim + 1);
    return r;
}

// Human-readable size of n 4-byte floats.
inline std::string float_bytes(std::size_t n) {
    const double bytes = 4.0 * static_cast<double>(n);
    std::ostringstream os;
    os.precision(4);
    if (bytes >= 1024.0 * 1024.0) os << bytes / (1024.0 * 1024.0) << "MB";
    else if (bytes >= 1024.0) os << bytes / 1024.0 << "KB";
    else os << bytes << "B";
    return os.str();
}

inline void print_report(std::ostream& os, const ModelReport& r) {
    os << "d = " << r.d << ", d_p = " << r.d_p << ", d_hat = " << r.d_hat << ", K = " << r.classes << "\n";
    for (const auto& row : r.rows) {
        os << row.method << ":\n"
           << "  feature dim          " << row.feature_dim << "\n"
           << "  feature complexity   " << row.feature_complexity << "\n"
           << "  classifier complexity " << row.classifier_complexity << "\n"
           << "  feature params       " << row.feature_params << " [" << float_bytes(row.feature_params) << "]\n"
           << "  classifier params    K*" << row.classifier_params << " [K*" << float_bytes(row.classifier_params)
           << "]\n";
    }
    os << "compression factor (d_p/d_hat)^2 = " << r.reduction_factor << "\n";
    if (r.total_model_params > 0) {
        os << "this model: " << r.total_model_params << " parameters [" << float_bytes(r.total_model_params)
           << "]\n";
    }
}

} // namespace idccp
