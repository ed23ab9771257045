#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "otoclab/algebra.hpp"
#include "otoclab/classical.hpp"
#include "otoclab/error.hpp"
#include "otoclab/spectrum.hpp"

using namespace otoclab;

namespace {

// Cyclic Jacobi rotations; slow but independent of the library eigensolver.
std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

double semicircle_cdf(double x) {
    if (x <= -2.0) return 0.0;
    if (x >= 2.0) return 1.0;
    const double pi = std::acos(-1.0);
    return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * pi) + std::asin(x / 2.0) / pi;
}

} // namespace

TEST(Diagonalize, IdentityMatrix) {
    OperatorMatrix id = identity_matrix(BasisTag{BasisKind::Abstract, 0, 0, 5, "id"});
    const auto eig = diagonalize(id);
    ASSERT_EQ(eig.dim(), 5u);
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(eig.energies(i), 1.0, 1e-15);
}

TEST(Diagonalize, HarmonicLimit) {
    const auto b = build_basis(2);
    const auto eig = diagonalize(build_hamiltonian({2, 0.0, 0.0}, b));
    const double expected[] = {0, 0.5, 0.5, 1, 1, 1};
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(eig.energies(i), expected[i], 1e-14);
}

TEST(Diagonalize, RejectsNonSymmetric) {
    const auto b = build_basis(3);
    EXPECT_THROW(diagonalize(generator_matrix(b, Generator::D_plus)), InvalidParameter);
}

TEST(Diagonalize, ResidualsTraceAndSigns) {
    for (int N : {10, 30}) {
        const auto b = build_basis(N);
        const auto H = build_hamiltonian({N, 0.4, 0.4}, b);
        const auto eig = diagonalize(H);
        EXPECT_LE(eig.orthonormality_residual, 1e-10);
        EXPECT_LE(eig.reconstruction_residual, 1e-9 * eig.energies.cwiseAbs().maxCoeff());
        EXPECT_NEAR(eig.energies.sum(), H.entries.trace(),
                    1e-9 * static_cast<double>(eig.dim()) * H.entries.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 1; i < eig.energies.size(); ++i) EXPECT_LE(eig.energies(i - 1), eig.energies(i));
        for (Eigen::Index c = 0; c < eig.vectors.cols(); ++c) {
            Eigen::Index k;
            eig.vectors.col(c).cwiseAbs().maxCoeff(&k);
            EXPECT_GT(eig.vectors(k, c), 0.0);
        }
    }
}

TEST(Diagonalize, OddMultipletsMatchJacobiOracle) {
    const auto b = build_basis(6);
    const auto H = build_hamiltonian({6, 1.0, 0.0}, b);
    const auto eig = diagonalize(H);
    const auto ref = jacobi_eigenvalues(H.entries);
    ASSERT_EQ(ref.size(), 28u);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(eig.energies(static_cast<Eigen::Index>(i)), ref[i], 1e-12);

    // Multiplet sizes counted from the oracle spectrum.
    std::vector<std::size_t> sizes{1};
    for (std::size_t i = 1; i < ref.size(); ++i) {
        if (ref[i] - ref[i - 1] <= 1e-9) {
            ++sizes.back();
        } else {
            sizes.push_back(1);
        }
    }
    for (auto s : sizes) EXPECT_EQ(s % 2, 1u);
    EXPECT_EQ(sizes, (std::vector<std::size_t>{13, 9, 5, 1}));
    EXPECT_EQ(degeneracies(eig.energies, 1e-9), sizes);
}

TEST(Diagonalize, ParityRouteMatchesFullSpace) {
    for (int N : {2, 9, 20}) {
        const auto b = build_basis(N);
        const auto H = build_hamiltonian({N, 0.4, 0.4}, b);
        const auto full = diagonalize(H);
        const auto split = diagonalize_by_parity(H, b);
        ASSERT_EQ(split.dim(), full.dim());
        EXPECT_LT((split.energies - full.energies).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE(split.orthonormality_residual, 1e-10);
        EXPECT_EQ(split.parity.size(), split.dim());
        const auto c1 = std::count(split.parity.begin(), split.parity.end(), 1);
        const auto blocks = parity_blocks(H, b);
        EXPECT_EQ(static_cast<std::size_t>(c1), blocks.block1.dim());
        // Eigenvectors are genuine eigenvectors of H.
        const Eigen::MatrixXd r = H.entries * split.vectors - split.vectors * split.energies.asDiagonal();
        EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(ToEigenbasis, HamiltonianBecomesDiagonal) {
    const auto b = build_basis(8);
    const auto H = build_hamiltonian({8, 0.4, 0.4}, b);
    const auto eig = diagonalize(H);
    const auto h = to_eigenbasis(H, eig);
    const Eigen::MatrixXd expected = eig.energies.asDiagonal();
    EXPECT_LT((h.entries - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(h.basis, eig.eigenbasis);
}

TEST(ToEigenbasis, IdentityAndNormPreserved) {
    const auto b = build_basis(10);
    const auto eig = diagonalize_by_parity(build_hamiltonian({10, 0.2, 0.7}, b), b);
    const auto id = to_eigenbasis(identity_matrix(b.tag()), eig);
    EXPECT_LT((id.entries - Eigen::MatrixXd::Identity(66, 66)).cwiseAbs().maxCoeff(), 1e-12);
    const auto dx = generator_matrix(b, Generator::D_x);
    const auto v = to_eigenbasis(dx, eig);
    EXPECT_NEAR(v.entries.norm(), dx.entries.norm(), 1e-10);
    EXPECT_EQ((v.entries - v.entries.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ToEigenbasis, BasisMismatchThrows) {
    const auto eig = diagonalize(build_hamiltonian({4, 0.4, 0.4}, build_basis(4)));
    EXPECT_THROW(to_eigenbasis(generator_matrix(build_basis(5), Generator::D_x), eig), BasisMismatch);
    auto foreign = goe_sample(15, 1);
    EXPECT_THROW(to_eigenbasis(foreign, eig), BasisMismatch);
}

TEST(Goe, DeterministicAndSymmetric) {
    const auto a = goe_sample(40, 7);
    const auto b = goe_sample(40, 7);
    const auto c = goe_sample(40, 8);
    const auto d = goe_sample(40, 7, 1);
    EXPECT_EQ(a.entries, b.entries);
    EXPECT_NE(a.entries, c.entries);
    EXPECT_NE(a.entries, d.entries);
    EXPECT_EQ(a.entries, a.entries.transpose());
    EXPECT_TRUE(a.symmetric);
    EXPECT_THROW(goe_sample(1, 1), InvalidParameter);
}

TEST(Goe, SemicircleKolmogorovSmirnov) {
    std::vector<double> all;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto eig = diagonalize(goe_sample(500, 1234, s));
        all.insert(all.end(), eig.energies.begin(), eig.energies.end());
    }
    std::sort(all.begin(), all.end());
    const double n = static_cast<double>(all.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const double f = semicircle_cdf(all[i]);
        ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    EXPECT_LT(ks, 0.05);
}

TEST(GroundState, ApproachesClassicalMinimum) {
    std::vector<double> e1;
    for (int N : {10, 20, 40}) {
        const auto b = build_basis(N);
        e1.push_back(diagonalize_by_parity(build_hamiltonian({N, 0.4, 0.4}, b), b).energies(0));
    }
    const double classical = minimize_h({0.4, 0.4}).value;
    EXPECT_NEAR(classical, -0.54, 0.02);
    // Approached from below with a gap that roughly halves as N doubles.
    for (int i = 0; i < 3; ++i) EXPECT_LT(e1[i], classical);
    EXPECT_LT(e1[0], e1[1]);
    EXPECT_LT(e1[1], e1[2]);
    const double r1 = (classical - e1[1]) / (classical - e1[0]);
    const double r2 = (classical - e1[2]) / (classical - e1[1]);
    EXPECT_NEAR(r1, 0.5, 0.1);
    EXPECT_NEAR(r2, 0.5, 0.1);
    // Leading 1/N correction removed by Richardson extrapolation.
    EXPECT_NEAR(2.0 * e1[2] - e1[1], classical, 5e-3);
}

TEST(Degeneracies, GapTolerance) {
    Eigen::VectorXd e(6);
    e << 0.0, 1e-12, 1.0, 2.0, 2.0 + 5e-10, 2.0 + 1e-9;
    EXPECT_EQ(degeneracies(e, 1e-9), (std::vector<std::size_t>{2, 1, 3}));
    EXPECT_EQ(degeneracies(e, 1e-13), (std::vector<std::size_t>{1, 1, 1, 1, 1, 1}));
}
