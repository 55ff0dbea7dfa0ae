#pragma once

#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "idccp/backbone.hpp"
#include "idccp/classifier.hpp"
#include "idccp/covariance.hpp"
#include "idccp/group_d4.hpp"
#include "idccp/isqrt.hpp"
#include "idccp/oracles.hpp"
#include "idccp/pipeline.hpp"
#include "idccp/stiefel.hpp"

namespace idccp {

struct SelftestResult {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool upper = true; // pass when measured <= bound; otherwise measured > bound
    bool passed() const { return upper ? measured <= bound : measured > bound; }
};

namespace detail {

inline Matrix selftest_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

inline Matrix selftest_spd(std::size_t n, Rng& rng) {
    const Matrix a = selftest_matrix(n, n, rng);
    Matrix s = matmul_nt(a, a);
    for (std::size_t i = 0; i < n; ++i) s(i, i) += static_cast<double>(n);
    return sym(s);
}

inline ImageTensor selftest_image(std::size_t size, Rng& rng) {
    ImageTensor img(1, size, size);
    for (double& v : img.data()) v = rng.uniform();
    return img;
}

inline double symmetric_direction_error(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                        const Matrix& analytic, Rng& rng) {
    const std::size_t n = x.rows();
    const Matrix dir = sym(selftest_matrix(n, n, rng));
    auto flat = [&](std::span<const double> v) {
        return f(Matrix(n, n, std::vector<double>(v.begin(), v.end())));
    };
    return oracle::directional_relative_error(flat, x.data(), analytic.data(), dir.data(), 1e-5);
}

} // namespace detail

// Fast versions of the library's invariant checks.
inline std::vector<SelftestResult> selftest_results() {
    std::vector<SelftestResult> out;
    Rng rng(20240601);

    double table_defect = 0.0;
    for (auto a : d4::kElements)
        for (auto b : d4::kElements)
            for (auto c : d4::kElements)
                if (d4::compose(d4::compose(a, b), c) != d4::compose(a, d4::compose(b, c))) table_defect += 1.0;
    out.push_back({"D4 composition is associative", table_defect, 0.0});

    double hom = 0.0;
    for (const auto& rho : d4::irrep_table()) hom = std::max(hom, d4::homomorphism_defect(rho.matrices));
    out.push_back({"irreps are homomorphisms", hom, 0.0});

    double orth = 0.0;
    for (const auto& a : d4::irrep_table())
        for (const auto& b : d4::irrep_table()) {
            const auto ca = d4::character_of(a), cb = d4::character_of(b);
            double s = 0.0;
            for (auto g : d4::kElements) s += ca(g) * cb(g);
            orth = std::max(orth, std::abs(s / 8.0 - (a.name == b.name ? 1.0 : 0.0)));
        }
    out.push_back({"character orthogonality", orth, 0.0});
    out.push_back({"trivial projection of rho_2 vanishes",
                   max_abs(d4::trivial_project(d4::irrep(d4::IrrepName::rho_2).matrices)), 0.0});

    const auto backbone = init_backbone(1, parse_layer_specs(default_backbone_spec(16)), rng);
    double eq = 0.0;
    for (int i = 0; i < 3; ++i) eq = std::max(eq, check_equivariance(backbone, detail::selftest_image(16, rng)));
    out.push_back({"backbone equivariance", eq, 1e-12});

    Model model{backbone, init_stiefel(16, 8, 7), ClassifierWeights::zeros(3, 8)};
    for (auto& w : model.classifier.w) w = detail::selftest_matrix(8, 8, rng);
    std::vector<ImageTensor> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(detail::selftest_image(16, rng));
    PipelineOptions opts;
    auto logits_fn = [&](const ImageTensor& x) { return pipeline_logits(model, opts, x); };
    out.push_back({"pipeline invariance", oracle::brute_force_invariance(logits_fn, inputs), 1e-6});
    PipelineOptions ablation = opts;
    ablation.pooling = PoolingMode::identity_only;
    auto ablation_fn = [&](const ImageTensor& x) { return pipeline_logits(model, ablation, x); };
    out.push_back({"branch-e ablation is not invariant", oracle::brute_force_invariance(ablation_fn, inputs),
                   1e-3, false});

    const auto ns = newton_schulz_sqrt(SpdMatrix(diag({4, 1})), 7);
    out.push_back({"Newton-Schulz diag(4,1) at J=7", max_abs(sub(ns.c_hat.matrix(), diag({2, 1}))), 1e-5});

    auto w = init_stiefel(12, 4, 3);
    for (int i = 0; i < 200; ++i) w = retract(w, riemannian_grad(w, detail::selftest_matrix(12, 4, rng)), 0.1);
    out.push_back({"orthogonality after 200 retractions", orthonormality_error(w.matrix()), 1e-8});

    {
        const Matrix f = detail::selftest_matrix(4, 9, rng);
        const Matrix g = detail::selftest_matrix(4, 4, rng);
        auto obj = [&](std::span<const double> x) {
            return inner(g, covariance(Matrix(4, 9, std::vector<double>(x.begin(), x.end()))).matrix());
        };
        out.push_back({"covariance gradient",
                       oracle::grad_check(obj, f.data(), covariance_backward_single(f, g).data()).max_relative_error,
                       1e-4});
    }
    {
        const SpdMatrix s(detail::selftest_spd(6, rng));
        const auto wc = init_stiefel(6, 3, 5);
        const Matrix g = detail::selftest_matrix(3, 3, rng);
        auto obj = [&](std::span<const double> x) {
            const Matrix wm(6, 3, std::vector<double>(x.begin(), x.end()));
            return inner(g, matmul_tn(wm, matmul(s.matrix(), wm)));
        };
        out.push_back({"compression gradient",
                       oracle::grad_check(obj, wc.matrix().data(), euclidean_grad(s, wc, g).data())
                           .max_relative_error,
                       1e-4});
    }
    {
        const Matrix s = detail::selftest_spd(5, rng);
        const Matrix g = detail::selftest_matrix(5, 5, rng);
        const auto res = newton_schulz_sqrt(SpdMatrix(s), 5);
        auto f = [&](const Matrix& x) { return inner(g, newton_schulz_sqrt(SpdMatrix(sym(x)), 5).c_hat.matrix()); };
        out.push_back({"Newton-Schulz gradient",
                       detail::symmetric_direction_error(f, s, newton_schulz_backward(res.tape, g), rng), 1e-3});
    }
    {
        const SpdMatrix c(detail::selftest_spd(3, rng));
        ClassifierWeights cw = ClassifierWeights::zeros(3, 3);
        for (auto& m : cw.w) m = detail::selftest_matrix(3, 3, rng);
        const std::vector<LabeledFeature> batch{{&c, 1}};
        const auto res = loss_and_grads(batch, cw, 0.01);
        auto obj = [&](std::span<const double> x) {
            ClassifierWeights probe = cw;
            probe.w[0] = Matrix(3, 3, std::vector<double>(x.begin(), x.end()));
            return loss_and_grads(batch, probe, 0.01).report.total;
        };
        out.push_back({"classifier gradient",
                       oracle::grad_check(obj, cw.w[0].data(), res.weight_grads.w[0].data()).max_relative_error,
                       1e-5});
    }
    return out;
}

// Prints one line per check and returns whether all passed.
inline bool run_selftest(std::ostream& os) {
    bool all = true;
    for (const auto& r : selftest_results()) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s %-40s measured %.3e %s %.1e\n", r.passed() ? "PASS" : "FAIL",
                      r.name.c_str(), r.measured, r.upper ? "<=" : ">", r.bound);
        os << line;
        all = all && r.passed();
    }
    os << (all ? "all checks passed\n" : "some checks FAILED\n");
    return all;
}

} // namespace idccp
