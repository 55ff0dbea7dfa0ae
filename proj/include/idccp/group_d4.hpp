#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "idccp/error.hpp"
#include "idccp/image.hpp"
#include "idccp/linalg.hpp"

namespace idccp::d4 {

// An element of D4 written as the transformation "reflect f times, then
// rotate counter-clockwise k quarter turns" (rho(g) = rho(r)^k rho(m)^f).
// The enumerators follow the column order of the irrep table, so the element
// named "mr^k" is r^k applied after m. With that naming compose(r, m) = mr,
// matching rho_2(r) rho_2(m) = rho_2(mr).
enum class GroupElement : std::uint8_t { e, r, r2, r3, m, mr, mr2, mr3 };

inline constexpr std::size_t kOrder = 8;

inline constexpr std::array<GroupElement, kOrder> kElements{
    GroupElement::e, GroupElement::r,  GroupElement::r2,  GroupElement::r3,
    GroupElement::m, GroupElement::mr, GroupElement::mr2, GroupElement::mr3};

constexpr std::size_t index(GroupElement g) noexcept { return static_cast<std::size_t>(g); }
constexpr int rotations(GroupElement g) noexcept { return static_cast<int>(g) % 4; }
constexpr bool is_reflection(GroupElement g) noexcept { return static_cast<int>(g) >= 4; }

constexpr GroupElement make_element(int rotations, bool reflect) noexcept {
    const int k = ((rotations % 4) + 4) % 4;
    return static_cast<GroupElement>((reflect ? 4 : 0) + k);
}

constexpr std::string_view name(GroupElement g) noexcept {
    constexpr std::array<std::string_view, kOrder> names{"e",  "r",   "r^2",  "r^3",
                                                         "m",  "mr",  "mr^2", "mr^3"};
    return names[index(g)];
}

// compose(a, b) applies b first, then a. Uses m r^k = r^-k m.
constexpr GroupElement compose(GroupElement a, GroupElement b) noexcept {
    const int kb = is_reflection(a) ? -rotations(b) : rotations(b);
    return make_element(rotations(a) + kb, is_reflection(a) != is_reflection(b));
}

constexpr GroupElement inverse(GroupElement g) noexcept {
    // Reflections are involutions; rotations invert their angle.
    return is_reflection(g) ? g : make_element(-rotations(g), false);
}

// Conjugacy classes {e}, {r^2}, {r, r^3}, {m, mr^2}, {mr, mr^3}.
inline const std::array<std::vector<GroupElement>, 5>& conjugacy_classes() {
    static const std::array<std::vector<GroupElement>, 5> classes{
        std::vector{GroupElement::e}, std::vector{GroupElement::r2},
        std::vector{GroupElement::r, GroupElement::r3},
        std::vector{GroupElement::m, GroupElement::mr2},
        std::vector{GroupElement::mr, GroupElement::mr3}};
    return classes;
}

// ---------------------------------------------------------------------------
// Action on square grids.
// ---------------------------------------------------------------------------

// Source pixel of output pixel (i, j) under g on an n x n grid. The rotation r
// is counter-clockwise, out(i, j) = in(j, n-1-i); the mirror m is a left-right
// flip, out(i, j) = in(i, n-1-j).
constexpr std::pair<std::size_t, std::size_t> source_index(GroupElement g, std::size_t n,
                                                           std::size_t i, std::size_t j) noexcept {
    for (int k = 0; k < rotations(g); ++k) {
        const std::size_t ni = j;
        const std::size_t nj = n - 1 - i;
        i = ni;
        j = nj;
    }
    if (is_reflection(g)) j = n - 1 - j;
    return {i, j};
}

// Transforms one n x n plane; dst must not alias src.
inline void act_on_plane(GroupElement g, std::size_t n, std::span<const double> src,
                         std::span<double> dst) {
    if (src.size() != n * n || dst.size() != n * n) {
        throw ShapeError("act_on_plane: plane size does not match grid " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const auto [si, sj] = source_index(g, n, i, j);
            dst[i * n + j] = src[si * n + sj];
        }
}

// Permutes pixel positions of every channel; values are untouched.
inline ImageTensor act_on_image(GroupElement g, const ImageTensor& img) {
    if (!img.square()) {
        throw ShapeError("act_on_image: image must be square, got " + img.shape_string());
    }
    if (g == GroupElement::e) return img;
    ImageTensor out(img.channels(), img.height(), img.width());
    for (std::size_t c = 0; c < img.channels(); ++c)
        act_on_plane(g, img.width(), img.plane(c), out.plane(c));
    return out;
}

// ---------------------------------------------------------------------------
// Representations.
// ---------------------------------------------------------------------------

// Matrices indexed by GroupElement.
using Representation = std::array<Matrix, kOrder>;

enum class IrrepName : std::uint8_t { rho_1_1, rho_1_m1, rho_m1_1, rho_m1_m1, rho_2 };

inline constexpr std::size_t kIrrepCount = 5;

inline constexpr std::array<IrrepName, kIrrepCount> kIrrepNames{
    IrrepName::rho_1_1, IrrepName::rho_1_m1, IrrepName::rho_m1_1, IrrepName::rho_m1_m1,
    IrrepName::rho_2};

constexpr std::string_view irrep_label(IrrepName n) noexcept {
    constexpr std::array<std::string_view, kIrrepCount> labels{"rho_{1,1}", "rho_{1,-1}",
                                                               "rho_{-1,1}", "rho_{-1,-1}",
                                                               "rho_2"};
    return labels[static_cast<std::size_t>(n)];
}

struct Irrep {
    IrrepName name;
    std::size_t degree;
    Representation matrices;

    const Matrix& operator()(GroupElement g) const { return matrices[index(g)]; }
};

namespace detail {

inline Matrix matrix_power(const Matrix& a, int k) {
    Matrix p = identity(a.rows());
    for (int i = 0; i < k; ++i) p = matmul(a, p);
    return p;
}

// rho(g) = rho(r)^k rho(m)^f from generator images.
inline Representation from_generators(const Matrix& rot, const Matrix& mirror) {
    Representation rep;
    for (auto g : kElements) {
        Matrix m = matrix_power(rot, rotations(g));
        if (is_reflection(g)) m = matmul(m, mirror);
        rep[index(g)] = std::move(m);
    }
    return rep;
}

} // namespace detail

// The five irreducible orthogonal representations. One-dimensional
// rho_{a,b} sends r to [a] and m to [b]; rho_2 is the standard action on R^2.
inline const std::array<Irrep, kIrrepCount>& irrep_table() {
    static const std::array<Irrep, kIrrepCount> table = [] {
        auto one_d = [](IrrepName n, double a, double b) {
            return Irrep{n, 1, detail::from_generators(Matrix{{a}}, Matrix{{b}})};
        };
        return std::array<Irrep, kIrrepCount>{
            one_d(IrrepName::rho_1_1, 1, 1), one_d(IrrepName::rho_1_m1, 1, -1),
            one_d(IrrepName::rho_m1_1, -1, 1), one_d(IrrepName::rho_m1_m1, -1, -1),
            Irrep{IrrepName::rho_2, 2,
                  detail::from_generators(Matrix{{0, -1}, {1, 0}}, Matrix{{1, 0}, {0, -1}})}};
    }();
    return table;
}

inline const Irrep& irrep(IrrepName n) { return irrep_table()[static_cast<std::size_t>(n)]; }

// Regular representation: rho(g) e_h = e_{gh}.
inline Representation regular_representation() {
    Representation rep;
    for (auto g : kElements) {
        Matrix p(kOrder, kOrder);
        for (auto h : kElements) p(index(compose(g, h)), index(h)) = 1.0;
        rep[index(g)] = std::move(p);
    }
    return rep;
}

inline Representation tensor_product(const Representation& a, const Representation& b) {
    Representation out;
    for (auto g : kElements) out[index(g)] = kron(a[index(g)], b[index(g)]);
    return out;
}

inline Representation tensor_product_irrep(const Irrep& a, const Irrep& b) {
    return tensor_product(a.matrices, b.matrices);
}

// Conjugates every matrix by an orthogonal q: q rho(g) q^T.
inline Representation conjugate(const Representation& rep, const Matrix& q) {
    Representation out;
    for (auto g : kElements) out[index(g)] = matmul_nt(matmul(q, rep[index(g)]), q);
    return out;
}

// Largest entry of rho(g1) rho(g2) - rho(g1 g2) over all pairs.
inline double homomorphism_defect(const Representation& rep) {
    double worst = 0.0;
    for (auto a : kElements)
        for (auto b : kElements) {
            const Matrix lhs = matmul(rep[index(a)], rep[index(b)]);
            worst = std::max(worst, max_abs(sub(lhs, rep[index(compose(a, b))])));
        }
    return worst;
}

// P = (1/|G|) sum_g rho(g): the projector onto the invariant subspace.
inline Matrix trivial_project(const Representation& rep) {
    const Matrix& first = rep[0];
    Matrix p(first.rows(), first.cols());
    for (auto g : kElements) {
        const Matrix& m = rep[index(g)];
        if (m.rows() != first.rows() || m.cols() != first.cols()) {
            throw ShapeError("trivial_project: element " + std::string(name(g)) + " has shape " +
                             m.shape_string() + ", expected " + first.shape_string());
        }
        axpy(p, 1.0, m);
    }
#ifndef NDEBUG
    if (first.rows() == first.cols() && homomorphism_defect(rep) > 1e-8) {
        throw ContractError("trivial_project: input is not a representation");
    }
#endif
    return scale(p, 1.0 / static_cast<double>(kOrder));
}

// ---------------------------------------------------------------------------
// Characters.
// ---------------------------------------------------------------------------

struct Character {
    std::array<double, kOrder> values{};

    double operator()(GroupElement g) const noexcept { return values[index(g)]; }
    friend bool operator==(const Character&, const Character&) = default;
};

inline Character character_of(const Representation& rep) {
    Character chi;
    for (auto g : kElements) chi.values[index(g)] = trace(rep[index(g)]);
    return chi;
}

inline Character character_of(const Irrep& rho) { return character_of(rho.matrices); }

inline Character operator*(const Character& a, const Character& b) {
    Character c;
    for (std::size_t i = 0; i < kOrder; ++i) c.values[i] = a.values[i] * b.values[i];
    return c;
}

inline bool is_class_function(const Character& chi, double tol = 1e-9) {
    for (const auto& cls : conjugacy_classes())
        for (auto g : cls)
            if (std::abs(chi(g) - chi(cls.front())) > tol) return false;
    return true;
}

// Multiplicity of each irrep tau_t in a representation with character chi:
// lambda_t = (1/|G|) sum_g chi(g) chi_t(g). All D4 characters are real.
using Multiplicities = std::array<int, kIrrepCount>;

inline Multiplicities decompose_multiplicities(const Character& chi) {
    if (!is_class_function(chi)) {
        throw ContractError("decompose_multiplicities: character is not a class function");
    }
    Multiplicities out{};
    for (const auto& tau : irrep_table()) {
        const Character chi_t = character_of(tau);
        double s = 0.0;
        for (auto g : kElements) s += chi(g) * chi_t(g);
        s /= static_cast<double>(kOrder);
        const double rounded = std::round(s);
        if (std::abs(s - rounded) > 1e-9 || rounded < 0.0) {
            throw ContractError("decompose_multiplicities: invalid character, multiplicity of " +
                                std::string(irrep_label(tau.name)) + " is " + std::to_string(s));
        }
        out[static_cast<std::size_t>(tau.name)] = static_cast<int>(rounded);
    }
    return out;
}

} // namespace idccp::d4
