#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "idccp/error.hpp"
#include "idccp/group_d4.hpp"
#include "idccp/image.hpp"
#include "idccp/linalg.hpp"
#include "idccp/rng.hpp"

namespace idccp {

// ---------------------------------------------------------------------------
// Layer specification
// ---------------------------------------------------------------------------

enum class LayerKind : std::uint8_t { conv, relu, avg_pool, max_pool };

// Zero padding placement for convolutions. `same` pads (k-1)/2 on every side,
// which keeps the network exactly D4-equivariant. `top_left` puts all k-1
// padding rows/columns before the image; output size is unchanged but the
// symmetry is broken.
enum class Padding : std::uint8_t { same, top_left };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t kernel = 0;       // conv only, odd
    std::size_t out_channels = 0; // conv only
    std::size_t stride = 0;       // pooling only
    Padding padding = Padding::same;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Default toy backbone: conv3x3(c->8) relu avgpool2 conv3x3(8->16) relu
// avgpool2 conv1x1(16->d).
inline std::string default_backbone_spec(std::size_t feature_dim = 32) {
    return "conv3x3:8,relu,avgpool2,conv3x3:16,relu,avgpool2,conv1x1:" +
           std::to_string(feature_dim);
}

// Comma separated tokens: convKxK:OUT[:asym], relu, avgpoolS, maxpoolS.
inline std::vector<LayerSpec> parse_layer_specs(const std::string& text) {
    std::vector<LayerSpec> layers;
    std::stringstream ss(text);
    std::string tok;
    auto fail = [&](const std::string& why) {
        throw ConfigError("backbone spec token '" + tok + "': " + why);
    };
    auto to_size = [&](const std::string& s) -> std::size_t {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            fail("expected a positive integer, got '" + s + "'");
        const auto v = std::stoull(s);
        if (v == 0) fail("value must be positive");
        return static_cast<std::size_t>(v);
    };
    while (std::getline(ss, tok, ',')) {
        tok.erase(0, tok.find_first_not_of(" \t"));
        tok.erase(tok.find_last_not_of(" \t") + 1);
        if (tok.empty()) continue;
        LayerSpec l;
        if (tok == "relu") {
            l.kind = LayerKind::relu;
        } else if (tok.rfind("avgpool", 0) == 0) {
            l.kind = LayerKind::avg_pool;
            l.stride = to_size(tok.substr(7));
        } else if (tok.rfind("maxpool", 0) == 0) {
            l.kind = LayerKind::max_pool;
            l.stride = to_size(tok.substr(7));
        } else if (tok.rfind("conv", 0) == 0) {
            l.kind = LayerKind::conv;
            const auto x = tok.find('x');
            const auto colon = tok.find(':');
            if (x == std::string::npos || colon == std::string::npos || x > colon)
                fail("expected convKxK:OUT");
            const auto k1 = to_size(tok.substr(4, x - 4));
            const auto k2 = to_size(tok.substr(x + 1, colon - x - 1));
            if (k1 != k2) fail("kernels must be square");
            if (k1 % 2 == 0) fail("kernel size must be odd");
            l.kernel = k1;
            auto rest = tok.substr(colon + 1);
            const auto colon2 = rest.find(':');
            if (colon2 != std::string::npos) {
                if (rest.substr(colon2 + 1) != "asym") fail("unknown conv option");
                l.padding = Padding::top_left;
                rest = rest.substr(0, colon2);
            }
            l.out_channels = to_size(rest);
        } else {
            fail("unknown layer");
        }
        layers.push_back(l);
    }
    if (layers.empty()) throw ConfigError("backbone spec is empty");
    if (layers.back().kind != LayerKind::conv)
        throw ConfigError("backbone spec must end with a (projection) conv layer");
    return layers;
}

inline std::string format_layer_specs(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (const auto& l : layers) {
        if (!out.empty()) out += ',';
        switch (l.kind) {
        case LayerKind::relu: out += "relu"; break;
        case LayerKind::avg_pool: out += "avgpool" + std::to_string(l.stride); break;
        case LayerKind::max_pool: out += "maxpool" + std::to_string(l.stride); break;
        case LayerKind::conv:
            out += "conv" + std::to_string(l.kernel) + "x" + std::to_string(l.kernel) + ":" +
                   std::to_string(l.out_channels);
            if (l.padding == Padding::top_left) out += ":asym";
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ConvWeights {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    Matrix kernels; // out x (in * k * k), entry (o, (i * k + u) * k + v)
    Matrix bias;    // 1 x out

    friend bool operator==(const ConvWeights&, const ConvWeights&) = default;
};

// One parameter set, replayed by every branch of the stack.
struct ConvNetParams {
    std::size_t in_channels = 0;
    std::vector<LayerSpec> layers;
    std::vector<ConvWeights> convs; // one per conv layer, in layer order

    std::size_t feature_dim() const { return convs.empty() ? 0 : convs.back().out_channels; }

    // Channels entering the last (projection) conv.
    std::size_t projection_input_dim() const {
        return convs.empty() ? 0 : convs.back().in_channels;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& c : convs) n += c.kernels.size() + c.bias.size();
        return n;
    }

    friend bool operator==(const ConvNetParams&, const ConvNetParams&) = default;
};

// Gaussian kernels with std sqrt(2 / (k^2 c_in)), zero biases.
inline ConvNetParams init_backbone(std::size_t in_channels, std::vector<LayerSpec> layers,
                                   Rng& rng) {
    ConvNetParams p;
    p.in_channels = in_channels;
    p.layers = std::move(layers);
    std::size_t c = in_channels;
    for (const auto& l : p.layers) {
        if (l.kind != LayerKind::conv) continue;
        ConvWeights w;
        w.in_channels = c;
        w.out_channels = l.out_channels;
        w.kernel = l.kernel;
        w.kernels = Matrix(l.out_channels, c * l.kernel * l.kernel);
        const double stddev = std::sqrt(2.0 / static_cast<double>(l.kernel * l.kernel * c));
        for (double& v : w.kernels.data()) v = rng.normal(0.0, stddev);
        w.bias = Matrix(1, l.out_channels);
        p.convs.push_back(std::move(w));
        c = l.out_channels;
    }
    if (p.convs.empty()) throw ConfigError("backbone has no conv layer");
    return p;
}

// Gradient container with the same layout as ConvNetParams::convs.
struct ConvNetGrads {
    std::vector<Matrix> kernels;
    std::vector<Matrix> biases;

    static ConvNetGrads zeros_like(const ConvNetParams& p) {
        ConvNetGrads g;
        for (const auto& c : p.convs) {
            g.kernels.emplace_back(c.kernels.rows(), c.kernels.cols());
            g.biases.emplace_back(c.bias.rows(), c.bias.cols());
        }
        return g;
    }

    void accumulate(const ConvNetGrads& o, double s = 1.0) {
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            axpy(kernels[i], s, o.kernels[i]);
            axpy(biases[i], s, o.biases[i]);
        }
    }

    friend bool operator==(const ConvNetGrads&, const ConvNetGrads&) = default;
};

// ---------------------------------------------------------------------------
// Forward / backward on one branch
// ---------------------------------------------------------------------------

// activations[0] is the input, activations[i + 1] the output of layer i.
struct ForwardTape {
    std::vector<ImageTensor> activations;
    std::vector<std::vector<std::uint32_t>> argmax; // per layer, max pooling only
};

struct BranchOutput {
    Matrix features; // d x (h w)
    ForwardTape tape;
};

namespace detail {

inline std::size_t pad_before(const ConvWeights& w, Padding p) {
    return p == Padding::same ? (w.kernel - 1) / 2 : w.kernel - 1;
}

// Zero-padded copy: channels x (H + k - 1) x (W + k - 1).
inline std::vector<double> padded_input(const ImageTensor& x, std::size_t k, std::size_t before) {
    const std::size_t hp = x.height() + k - 1;
    const std::size_t wp = x.width() + k - 1;
    std::vector<double> buf(x.channels() * hp * wp, 0.0);
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t y = 0; y < x.height(); ++y) {
            const auto src = x.plane(c).subspan(y * x.width(), x.width());
            std::copy(src.begin(), src.end(),
                      buf.begin() + static_cast<std::ptrdiff_t>((c * hp + y + before) * wp + before));
        }
    return buf;
}

inline ImageTensor conv_forward(const ConvWeights& w, Padding padding, const ImageTensor& x) {
    const std::size_t k = w.kernel;
    const std::size_t h = x.height();
    const std::size_t wd = x.width();
    const std::size_t hp = h + k - 1;
    const std::size_t wp = wd + k - 1;
    const auto buf = padded_input(x, k, pad_before(w, padding));
    ImageTensor out(w.out_channels, h, wd);
    for (std::size_t o = 0; o < w.out_channels; ++o) {
        auto op = out.plane(o);
        std::fill(op.begin(), op.end(), w.bias(0, o));
        const double* wrow = w.kernels.row(o).data();
        for (std::size_t i = 0; i < w.in_channels; ++i) {
            const double* ip = buf.data() + i * hp * wp;
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                    const double wv = wrow[(i * k + u) * k + v];
                    for (std::size_t y = 0; y < h; ++y) {
                        double* orow = op.data() + y * wd;
                        const double* irow = ip + (y + u) * wp + v;
                        for (std::size_t xx = 0; xx < wd; ++xx) orow[xx] += wv * irow[xx];
                    }
                }
        }
    }
    return out;
}

inline ImageTensor conv_backward(const ConvWeights& w, Padding padding, const ImageTensor& x,
                                 const ImageTensor& gout, Matrix& gkern, Matrix& gbias) {
    const std::size_t k = w.kernel;
    const std::size_t h = x.height();
    const std::size_t wd = x.width();
    const std::size_t hp = h + k - 1;
    const std::size_t wp = wd + k - 1;
    const std::size_t before = pad_before(w, padding);
    const auto buf = padded_input(x, k, before);
    std::vector<double> gbuf(buf.size(), 0.0);
    for (std::size_t o = 0; o < w.out_channels; ++o) {
        const auto gp = gout.plane(o);
        double bsum = 0.0;
        for (double g : gp) bsum += g;
        gbias(0, o) += bsum;
        const double* wrow = w.kernels.row(o).data();
        double* gwrow = gkern.row(o).data();
        for (std::size_t i = 0; i < w.in_channels; ++i) {
            const double* ip = buf.data() + i * hp * wp;
            double* gip = gbuf.data() + i * hp * wp;
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                    const double wv = wrow[(i * k + u) * k + v];
                    double acc = 0.0;
                    for (std::size_t y = 0; y < h; ++y) {
                        const double* grow = gp.data() + y * wd;
                        const double* irow = ip + (y + u) * wp + v;
                        double* girow = gip + (y + u) * wp + v;
                        for (std::size_t xx = 0; xx < wd; ++xx) {
                            acc += grow[xx] * irow[xx];
                            girow[xx] += wv * grow[xx];
                        }
                    }
                    gwrow[(i * k + u) * k + v] += acc;
                }
        }
    }
    ImageTensor gin(x.channels(), h, wd);
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx)
                gin.at(c, y, xx) = gbuf[(c * hp + y + before) * wp + xx + before];
    return gin;
}

inline ImageTensor pool_forward(LayerKind kind, std::size_t s, const ImageTensor& x,
                                std::vector<std::uint32_t>* argmax) {
    const std::size_t ho = x.height() / s;
    const std::size_t wo = x.width() / s;
    ImageTensor out(x.channels(), ho, wo);
    if (argmax) argmax->assign(out.data().size(), 0);
    const double inv = 1.0 / static_cast<double>(s * s);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx, ++idx) {
                if (kind == LayerKind::avg_pool) {
                    double sum = 0.0;
                    for (std::size_t u = 0; u < s; ++u)
                        for (std::size_t v = 0; v < s; ++v) sum += x.at(c, y * s + u, xx * s + v);
                    out.at(c, y, xx) = sum * inv;
                } else {
                    double best = x.at(c, y * s, xx * s);
                    std::uint32_t best_pos = 0;
                    for (std::size_t u = 0; u < s; ++u)
                        for (std::size_t v = 0; v < s; ++v) {
                            const double val = x.at(c, y * s + u, xx * s + v);
                            if (val > best) {
                                best = val;
                                best_pos = static_cast<std::uint32_t>(u * s + v);
                            }
                        }
                    out.at(c, y, xx) = best;
                    (*argmax)[idx] = best_pos;
                }
            }
    return out;
}

inline ImageTensor pool_backward(LayerKind kind, std::size_t s, const ImageTensor& x,
                                 const ImageTensor& gout,
                                 const std::vector<std::uint32_t>& argmax) {
    ImageTensor gin(x.channels(), x.height(), x.width());
    const double inv = 1.0 / static_cast<double>(s * s);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < gout.channels(); ++c)
        for (std::size_t y = 0; y < gout.height(); ++y)
            for (std::size_t xx = 0; xx < gout.width(); ++xx, ++idx) {
                const double g = gout.at(c, y, xx);
                if (kind == LayerKind::avg_pool) {
                    for (std::size_t u = 0; u < s; ++u)
                        for (std::size_t v = 0; v < s; ++v) gin.at(c, y * s + u, xx * s + v) += g * inv;
                } else {
                    const std::size_t u = argmax[idx] / s;
                    const std::size_t v = argmax[idx] % s;
                    gin.at(c, y * s + u, xx * s + v) += g;
                }
            }
    return gin;
}

} // namespace detail

// Checks that the layer spec can run on images of this shape.
inline void validate_input(const ConvNetParams& params, const ImageTensor& img) {
    if (img.channels() != params.in_channels) {
        throw ConfigError("backbone expects " + std::to_string(params.in_channels) +
                          " input channels, image has " + std::to_string(img.channels()));
    }
    std::size_t h = img.height();
    std::size_t w = img.width();
    for (const auto& l : params.layers) {
        if (l.kind == LayerKind::avg_pool || l.kind == LayerKind::max_pool) {
            if (h % l.stride != 0 || w % l.stride != 0) {
                throw ConfigError("pooling stride " + std::to_string(l.stride) +
                                  " does not divide feature size " + std::to_string(h) + "x" +
                                  std::to_string(w));
            }
            h /= l.stride;
            w /= l.stride;
        }
    }
    if (h * w < 2) throw ConfigError("backbone output has fewer than 2 spatial positions");
}

inline BranchOutput forward_branch(const ConvNetParams& params, const ImageTensor& img) {
    validate_input(params, img);
    BranchOutput out;
    auto& tape = out.tape;
    tape.activations.reserve(params.layers.size() + 1);
    tape.argmax.resize(params.layers.size());
    tape.activations.push_back(img);
    std::size_t conv_idx = 0;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& l = params.layers[li];
        const ImageTensor& x = tape.activations.back();
        ImageTensor y;
        switch (l.kind) {
        case LayerKind::conv:
            y = detail::conv_forward(params.convs[conv_idx++], l.padding, x);
            break;
        case LayerKind::relu:
            y = x;
            for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
            break;
        case LayerKind::avg_pool:
            y = detail::pool_forward(l.kind, l.stride, x, nullptr);
            break;
        case LayerKind::max_pool:
            y = detail::pool_forward(l.kind, l.stride, x, &tape.argmax[li]);
            break;
        }
        tape.activations.push_back(std::move(y));
    }
    const ImageTensor& last = tape.activations.back();
    std::vector<double> flat(last.data().begin(), last.data().end());
    out.features = Matrix(last.channels(), last.plane_size(), std::move(flat));
    return out;
}

struct BranchGradients {
    ConvNetGrads params;
    ImageTensor input;
};

// Accumulates into `grads` and returns the gradient w.r.t. the branch input.
inline ImageTensor backward_branch(const ConvNetParams& params, const ForwardTape& tape,
                                   const Matrix& grad_features, ConvNetGrads& grads) {
    const ImageTensor& last = tape.activations.back();
    if (grad_features.rows() != last.channels() || grad_features.cols() != last.plane_size()) {
        throw ShapeError("backward_branch: gradient shape " + grad_features.shape_string() +
                         " does not match features " + std::to_string(last.channels()) + "x" +
                         std::to_string(last.plane_size()));
    }
    ImageTensor g(last.channels(), last.height(), last.width(),
                  std::vector<double>(grad_features.data().begin(), grad_features.data().end()));
    std::size_t conv_idx = params.convs.size();
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& l = params.layers[li];
        const ImageTensor& x = tape.activations[li];
        switch (l.kind) {
        case LayerKind::conv: {
            --conv_idx;
            g = detail::conv_backward(params.convs[conv_idx], l.padding, x, g,
                                      grads.kernels[conv_idx], grads.biases[conv_idx]);
            break;
        }
        case LayerKind::relu: {
            auto gd = g.data();
            auto xd = x.data();
            for (std::size_t i = 0; i < gd.size(); ++i)
                if (!(xd[i] > 0.0)) gd[i] = 0.0;
            break;
        }
        case LayerKind::avg_pool:
        case LayerKind::max_pool:
            g = detail::pool_backward(l.kind, l.stride, x, g, tape.argmax[li]);
            break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Siamese D4 stack
// ---------------------------------------------------------------------------

// Branch g holds the features of act_on_image(g, x).
using FeatureStack = std::array<Matrix, d4::kOrder>;

struct StackOutput {
    FeatureStack features;
    std::array<ForwardTape, d4::kOrder> tapes;
};

inline StackOutput forward_stack(const ConvNetParams& params, const ImageTensor& img) {
    if (!img.square()) throw ShapeError("forward_stack: image must be square");
    validate_input(params, img);
    StackOutput out;
    for (auto g : d4::kElements) {
        auto b = forward_branch(params, d4::act_on_image(g, img));
        out.features[d4::index(g)] = std::move(b.features);
        out.tapes[d4::index(g)] = std::move(b.tape);
    }
    return out;
}

// Branch gradients are accumulated in the fixed order e, r, r^2, r^3, m, mr,
// mr^2, mr^3. The input gradient of branch g is pulled back through g^-1.
inline BranchGradients backward_stack(const ConvNetParams& params,
                                      const std::array<ForwardTape, d4::kOrder>& tapes,
                                      const FeatureStack& grad_per_branch) {
    BranchGradients out{ConvNetGrads::zeros_like(params), {}};
    const ImageTensor& input = tapes[0].activations.front();
    out.input = ImageTensor(input.channels(), input.height(), input.width());
    for (auto g : d4::kElements) {
        const auto gi = backward_branch(params, tapes[d4::index(g)], grad_per_branch[d4::index(g)],
                                        out.params);
        const auto pulled = d4::act_on_image(d4::inverse(g), gi);
        auto od = out.input.data();
        auto pd = pulled.data();
        for (std::size_t i = 0; i < od.size(); ++i) od[i] += pd[i];
    }
    return out;
}

// Every kernel's spatial grid transformed by g.
inline ConvNetParams transform_kernels(const ConvNetParams& params, d4::GroupElement g) {
    ConvNetParams out = params;
    for (auto& c : out.convs) {
        const std::size_t k = c.kernel;
        if (k == 1) continue;
        std::vector<double> src(k * k);
        std::vector<double> dst(k * k);
        for (std::size_t o = 0; o < c.out_channels; ++o)
            for (std::size_t i = 0; i < c.in_channels; ++i) {
                auto row = c.kernels.row(o).subspan(i * k * k, k * k);
                std::copy(row.begin(), row.end(), src.begin());
                d4::act_on_plane(g, k, src, dst);
                std::copy(dst.begin(), dst.end(), row.begin());
            }
    }
    return out;
}

// max_g || Phi(T_g x; K) - T'_g Phi(x; T_{g^-1} K) ||_inf, where T'_g acts on
// the spatial grid of every feature channel. Zero for networks built from
// symmetric-padding convolutions, pointwise nonlinearities and aligned pooling.
inline double check_equivariance(const ConvNetParams& params, const ImageTensor& img) {
    double worst = 0.0;
    for (auto g : d4::kElements) {
        const auto lhs = forward_branch(params, d4::act_on_image(g, img));
        const auto rhs = forward_branch(transform_kernels(params, d4::inverse(g)), img);
        const ImageTensor& fmap = rhs.tape.activations.back();
        const ImageTensor moved = d4::act_on_image(g, fmap);
        const auto a = lhs.features.data();
        const auto b = moved.data();
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

} // namespace idccp
