#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "idccp/covariance.hpp"
#include "idccp/error.hpp"
#include "idccp/group_d4.hpp"
#include "idccp/image.hpp"
#include "idccp/linalg.hpp"
#include "idccp/rng.hpp"

namespace idccp::oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h on the listed
// coordinates (all of them when `coords` is empty). Entries not probed are 0.
inline std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> x,
                                            double step = 1e-5,
                                            std::span<const std::size_t> coords = {}) {
    if (!(step > 0.0)) throw OracleError("finite_diff_grad: step must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size(), 0.0);
    auto eval = [&](std::size_t i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double fp = f(probe);
        probe[i] = saved - step;
        const double fm = f(probe);
        probe[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw OracleError("finite_diff_grad: non-finite function value");
        }
        grad[i] = (fp - fm) / (2.0 * step);
    };
    if (coords.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) eval(i);
    } else {
        for (std::size_t i : coords) eval(i);
    }
    return grad;
}

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double step = 0.0;
    std::size_t probes = 0;
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Seeded subset of `count` distinct coordinates out of n (all when n <= count).
inline std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n <= count) return idx;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

// Compares an analytic gradient against central differences of f around x.
inline GradCheckReport grad_check(const ScalarFn& f, std::span<const double> x,
                                  std::span<const double> analytic, double step = 1e-5,
                                  std::span<const std::size_t> coords = {}) {
    if (analytic.size() != x.size()) throw OracleError("grad_check: gradient size mismatch");
    const auto numeric = finite_diff_grad(f, x, step, coords);
    GradCheckReport rep;
    rep.step = step;
    auto visit = [&](std::size_t i) {
        const double e = relative_error(analytic[i], numeric[i]);
        if (rep.probes == 0 || e > rep.max_relative_error) {
            rep.max_relative_error = e;
            rep.worst_index = i;
        }
        ++rep.probes;
    };
    if (coords.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) visit(i);
    } else {
        for (std::size_t i : coords) visit(i);
    }
    return rep;
}

// Directional check: compares <analytic, dir> with (f(x + h dir) - f(x - h dir)) / 2h.
inline double directional_relative_error(const ScalarFn& f, std::span<const double> x,
                                         std::span<const double> analytic,
                                         std::span<const double> dir, double step = 1e-5) {
    std::vector<double> xp(x.begin(), x.end());
    std::vector<double> xm(x.begin(), x.end());
    double predicted = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] += step * dir[i];
        xm[i] -= step * dir[i];
        predicted += analytic[i] * dir[i];
    }
    const double fp = f(xp);
    const double fm = f(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw OracleError("directional check: non-finite function value");
    }
    return relative_error(predicted, (fp - fm) / (2.0 * step));
}

// Psi diag(sqrt(lambda)) Psi^T via the Jacobi eigensolver.
inline Matrix eig_sqrt(const Matrix& sigma) {
    const auto eig = sym_eig(sigma);
    const double tr = std::max(std::abs(trace(sigma)), 1e-300);
    std::vector<double> roots(eig.eigenvalues.size());
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double l = eig.eigenvalues[i];
        if (l < -1e-10 * tr) throw ContractError("eig_sqrt: input is not positive semidefinite");
        roots[i] = std::sqrt(std::max(l, 0.0));
    }
    return matmul_nt(matmul(eig.eigenvectors, diag(roots)), eig.eigenvectors);
}

using LogitFn = std::function<std::vector<double>(const ImageTensor&)>;

// Largest relative logit deviation ||z(x) - z(T_g x)||_inf / (1 + ||z(x)||_inf)
// over all inputs and group elements.
inline double brute_force_invariance(const LogitFn& pipeline, std::span<const ImageTensor> inputs) {
    double worst = 0.0;
    for (const auto& x : inputs) {
        const auto z0 = pipeline(x);
        double zmax = 0.0;
        for (double v : z0) zmax = std::max(zmax, std::abs(v));
        for (auto g : d4::kElements) {
            if (g == d4::GroupElement::e) continue;
            const auto zg = pipeline(d4::act_on_image(g, x));
            double dev = 0.0;
            for (std::size_t k = 0; k < z0.size(); ++k) dev = std::max(dev, std::abs(z0[k] - zg[k]));
            worst = std::max(worst, dev / (1.0 + zmax));
        }
    }
    return worst;
}

} // namespace idccp::oracle
