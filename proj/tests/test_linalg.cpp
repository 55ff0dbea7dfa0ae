#include <gtest/gtest.h>

#include <sstream>

#include "idccp/linalg.hpp"
#include "test_util.hpp"

using namespace idccp;
using idccp::test::random_matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Matrix a{{1, 2}, {3, 4}};
    EXPECT_EQ(matmul(identity(2), a), a);
}

TEST(Matmul, RotationTimesMirror) {
    // rho_2(r) rho_2(m) = rho_2(mr)
    const Matrix r{{0, -1}, {1, 0}};
    const Matrix m{{1, 0}, {0, -1}};
    EXPECT_EQ(matmul(r, m), (Matrix{{0, 1}, {1, 0}}));
}

TEST(Matmul, RowTimesColumn) {
    EXPECT_EQ(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}), (Matrix{{11}}));
}

TEST(Matmul, DimensionMismatchNamesBothShapes) {
    try {
        matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos);
    }
}

TEST(Matmul, TransposedVariantsAgree) {
    Rng rng(3);
    const Matrix a = random_matrix(5, 4, rng);
    const Matrix b = random_matrix(5, 3, rng);
    const Matrix c = random_matrix(6, 4, rng);
    EXPECT_LT(max_abs(sub(matmul_tn(a, b), matmul(transpose(a), b))), 1e-14);
    EXPECT_LT(max_abs(sub(matmul_nt(a, c), matmul(a, transpose(c)))), 1e-14);
}

TEST(Matmul, AssociativeOnBoundedEntries) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a(4, 6), b(6, 5), c(5, 3);
        for (auto* m : {&a, &b, &c})
            for (double& v : m->data()) v = rng.uniform(-1.0, 1.0);
        const Matrix l = matmul(matmul(a, b), c);
        const Matrix r = matmul(a, matmul(b, c));
        EXPECT_LE(frobenius_norm(sub(l, r)), 1e-12 * frobenius_norm(l));
    }
}

TEST(Matrix, NonFiniteEntriesRejected) {
    EXPECT_THROW((Matrix(1, 1, std::vector<double>{std::nan("")})), NonFiniteError);
    const Matrix big{{1e300}};
    EXPECT_THROW(matmul(big, big), NonFiniteError);
}

TEST(QrPositive, IdentitySliceIsFixed) {
    Matrix a(5, 3);
    for (std::size_t i = 0; i < 3; ++i) a(i, i) = 1.0;
    const auto qr = qr_positive(a);
    EXPECT_LT(max_abs(sub(qr.q, a)), 1e-15);
    EXPECT_LT(max_abs(sub(qr.r, identity(3))), 1e-15);
}

TEST(QrPositive, SingleColumnNormalization) {
    const auto qr = qr_positive(Matrix{{0}, {2}});
    EXPECT_NEAR(qr.q(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(qr.q(1, 0), 1.0, 1e-15);
    EXPECT_NEAR(qr.r(0, 0), 2.0, 1e-15);
}

TEST(QrPositive, RandomGaussianReconstructs) {
    Rng rng(7);
    const Matrix a = random_matrix(8, 3, rng);
    const auto qr = qr_positive(a);
    EXPECT_LE(frobenius_norm(sub(matmul(qr.q, qr.r), a)), 1e-10);
    EXPECT_LE(frobenius_norm(sub(matmul_tn(qr.q, qr.q), identity(3))), 1e-10);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GT(qr.r(i, i), 0.0);
        for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(qr.r(i, j), 0.0);
    }
}

TEST(QrPositive, IdempotentOnItsOwnQ) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix q = qr_positive(random_matrix(10, 4, rng)).q;
        EXPECT_LE(max_abs(sub(qr_positive(q).q, q)), 1e-12);
    }
}

TEST(QrPositive, RankDeficientInputThrows) {
    const Matrix a{{1, 2}, {2, 4}, {3, 6}};
    EXPECT_THROW(qr_positive(a), SingularityError);
    EXPECT_THROW(qr_positive(Matrix(3, 2)), SingularityError);
    EXPECT_THROW(qr_positive(Matrix(2, 3)), ShapeError);
}

TEST(SymEig, DiagonalInput) {
    const auto eig = sym_eig(diag({4, 1}));
    ASSERT_EQ(eig.eigenvalues.size(), 2u);
    EXPECT_DOUBLE_EQ(eig.eigenvalues[0], 4.0);
    EXPECT_DOUBLE_EQ(eig.eigenvalues[1], 1.0);
    EXPECT_LT(max_abs(sub(matmul(eig.eigenvectors, transpose(eig.eigenvectors)), identity(2))),
              1e-15);
    EXPECT_NEAR(std::abs(eig.eigenvectors(0, 0)), 1.0, 1e-15);
}

TEST(SymEig, TwoByTwoCharacteristicPolynomial) {
    // det([[2-l, 1], [1, 2-l]]) = (l - 3)(l - 1)
    const auto eig = sym_eig(Matrix{{2, 1}, {1, 2}});
    EXPECT_NEAR(eig.eigenvalues[0], 3.0, 1e-14);
    EXPECT_NEAR(eig.eigenvalues[1], 1.0, 1e-14);
}

TEST(SymEig, ZeroMatrix) {
    const auto eig = sym_eig(Matrix(3, 3));
    for (double l : eig.eigenvalues) EXPECT_EQ(l, 0.0);
}

TEST(SymEig, AsymmetricInputThrows) {
    EXPECT_THROW(sym_eig(Matrix{{1, 2}, {0, 1}}), ContractError);
}

TEST(SymEig, ReconstructionAndOrthogonality) {
    Rng rng(21);
    for (std::size_t n : {3u, 10u, 40u}) {
        const Matrix a = test::random_symmetric(n, rng);
        const auto eig = sym_eig(a);
        const Matrix recon = matmul_nt(matmul(eig.eigenvectors, diag(eig.eigenvalues)),
                                       eig.eigenvectors);
        EXPECT_LE(frobenius_norm(sub(recon, a)), 1e-8 * frobenius_norm(a));
        EXPECT_LE(frobenius_norm(sub(matmul_tn(eig.eigenvectors, eig.eigenvectors), identity(n))),
                  1e-10);
        for (std::size_t i = 1; i < n; ++i) EXPECT_GE(eig.eigenvalues[i - 1], eig.eigenvalues[i]);
    }
}

TEST(Kron, IdentityTimesIdentity) { EXPECT_EQ(kron(identity(2), identity(2)), identity(4)); }

TEST(Kron, MirrorTensorMirror) {
    EXPECT_EQ(kron(diag({1, -1}), diag({1, -1})), diag({1, -1, -1, 1}));
}

TEST(Kron, ScalarCase) {
    const Matrix a{{1, 2}, {3, 4}};
    EXPECT_EQ(kron(Matrix{{2}}, a), scale(a, 2.0));
}

TEST(Kron, TraceIsMultiplicative) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(3, 3, rng);
        const Matrix b = random_matrix(4, 4, rng);
        EXPECT_NEAR(trace(kron(a, b)), trace(a) * trace(b), 1e-12 * (1 + std::abs(trace(a) * trace(b))));
    }
}

TEST(CenteringMatrix, IdempotentAndAnnihilatesOnes) {
    for (std::size_t n : {1u, 2u, 7u, 50u}) {
        const Matrix c = centering_matrix(n);
        EXPECT_LE(max_abs(sub(matmul(c, c), c)), 1e-12);
        EXPECT_LE(max_abs(matmul(c, ones(n, 1))), 1e-12);
    }
}

TEST(Plumbing, TraceScaleAddNorm) {
    const Matrix a{{1, 2}, {3, 4}};
    EXPECT_EQ(trace(a), 5.0);
    EXPECT_EQ(add(a, a), scale(a, 2.0));
    EXPECT_EQ(sub(a, a), Matrix(2, 2));
    EXPECT_DOUBLE_EQ(frobenius_norm(a), std::sqrt(30.0));
    EXPECT_EQ(transpose(a), (Matrix{{1, 3}, {2, 4}}));
    EXPECT_THROW(trace(Matrix(2, 3)), ShapeError);
    EXPECT_THROW(add(Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST(WireFormat, HeaderLayoutAndRoundTrip) {
    const Matrix a{{1.5, -2}, {3, 4e-300}, {0, 7}};
    const std::string bytes = to_bytes(a);
    ASSERT_EQ(bytes.size(), 4u + 12u + 6u * 8u);
    EXPECT_EQ(bytes.substr(0, 4), "IDCP");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u); // version, little endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u); // rows
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2u); // cols
    std::istringstream is(bytes);
    const Matrix b = read_matrix(is);
    EXPECT_EQ(a, b);
    EXPECT_EQ(to_bytes(b), bytes);
}

TEST(WireFormat, TruncatedOrCorruptInputThrows) {
    const std::string bytes = to_bytes(Matrix{{1, 2}});
    std::istringstream trunc(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_matrix(trunc), DataError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream corrupt(bad);
    EXPECT_THROW(read_matrix(corrupt), DataError);
}
