#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "otoclab/algebra.hpp"
#include "otoclab/error.hpp"

using namespace otoclab;

namespace {

// Independent oracle: three boson modes on a truncated product space with
// occupations 0..N each, mode order (sigma, tau+, tau-). Operators built there
// by plain matrix products and then restricted to the fixed-N subspace in the
// basis order under test.
struct ProductSpace {
    int N;
    int cut;
    Eigen::MatrixXd a[3];

    explicit ProductSpace(int n) : N(n), cut(n + 1) {
        Eigen::MatrixXd single = Eigen::MatrixXd::Zero(cut, cut);
        for (int k = 1; k < cut; ++k) single(k - 1, k) = std::sqrt(static_cast<double>(k));
        const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(cut, cut);
        a[0] = kron(kron(single, id), id);
        a[1] = kron(kron(id, single), id);
        a[2] = kron(kron(id, id), single);
    }

    static Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        Eigen::MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            for (Eigen::Index j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        return out;
    }

    Eigen::Index index(const Occupation& s) const {
        return (static_cast<Eigen::Index>(s.n_sigma) * cut + s.n_plus) * cut + s.n_minus;
    }

    Eigen::MatrixXd bil(int i, int j) const { return a[i].transpose() * a[j]; }

    Eigen::MatrixXd restrict(const Eigen::MatrixXd& op, const FockBasis& basis) const {
        const auto d = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd out(d, d);
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index c = 0; c < d; ++c)
                out(r, c) = op(index(basis.state(static_cast<std::size_t>(r))),
                               index(basis.state(static_cast<std::size_t>(c))));
        return out;
    }
};

constexpr int S = 0, P = 1, M = 2;

Eigen::MatrixXd oracle(const ProductSpace& ps, Generator g) {
    const double r2 = std::sqrt(2.0);
    const Eigen::MatrixXd Dp = r2 * (ps.bil(P, S) - ps.bil(S, M));
    const Eigen::MatrixXd Dm = -r2 * (ps.bil(M, S) - ps.bil(S, P));
    const Eigen::MatrixXd l = ps.bil(P, P) - ps.bil(M, M);
    switch (g) {
    case Generator::n_tau: return ps.bil(P, P) + ps.bil(M, M);
    case Generator::n_s: return ps.bil(S, S);
    case Generator::l: return l;
    case Generator::D_plus: return Dp;
    case Generator::D_minus: return Dm;
    case Generator::D_x: return 0.5 * (Dp + Dm);
    case Generator::Q_plus: return r2 * ps.bil(P, M);
    case Generator::Q_minus: return r2 * ps.bil(M, P);
    case Generator::Q: return ps.bil(P, M) + ps.bil(M, P);
    case Generator::R_x: return 0.5 * r2 * (ps.bil(P, S) + ps.bil(S, M) + ps.bil(M, S) + ps.bil(S, P));
    case Generator::D_squared: return 0.5 * (Dp * Dm + Dm * Dp) + l * l;
    case Generator::n_plus_Q: return ps.bil(P, P) + ps.bil(M, M) + ps.bil(P, M) + ps.bil(M, P);
    default: break;
    }
    throw std::logic_error("no oracle");
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace

TEST(FockBasis, DimensionFormula) {
    for (int N = 1; N <= 200; ++N) {
        const auto b = build_basis(N);
        ASSERT_EQ(b.size(), static_cast<std::size_t>((N + 1) * (N + 2) / 2)) << N;
        ASSERT_EQ(b.size(), fock_dimension(N));
    }
    EXPECT_EQ(build_basis(2).size(), 6u);
    EXPECT_EQ(build_basis(60).size(), 1891u);
    EXPECT_EQ(build_basis(100).size(), 5151u);
}

TEST(FockBasis, RejectsNonPositiveN) {
    EXPECT_THROW(build_basis(0), InvalidParameter);
    EXPECT_THROW(build_basis(-3), InvalidParameter);
}

TEST(FockBasis, StatesValidUniqueAndOrdered) {
    const auto b = build_basis(9);
    std::set<Occupation> seen;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto& s = b.state(i);
        EXPECT_GE(s.n_sigma, 0);
        EXPECT_GE(s.n_plus, 0);
        EXPECT_GE(s.n_minus, 0);
        EXPECT_EQ(s.n_sigma + s.n_plus + s.n_minus, 9);
        EXPECT_TRUE(seen.insert(s).second);
        EXPECT_EQ(b.index_of(s), i);
        if (i > 0) {
            const auto& p = b.state(i - 1);
            EXPECT_TRUE(p.n_tau() < s.n_tau() || (p.n_tau() == s.n_tau() && p.l() < s.l()));
        }
    }
    EXPECT_THROW(b.index_of({1, 1, 1}), InvalidParameter);
    EXPECT_FALSE(b.contains({9, 1, 0}));
}

TEST(FockBasis, ParityLabelsMatchCombinedBasis) {
    // H^(1): |l_+> with even l and |l_-> with odd l; l >= 0 positions carry l_+.
    const auto b = build_basis(7);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const int l = b.state(i).l();
        const bool plus = l >= 0;
        const bool even = (std::abs(l) % 2) == 0;
        EXPECT_EQ(b.parity_of(i), (plus == even) ? 1 : 2) << i;
    }
}

TEST(Generators, LIsDiagonalAtNOne) {
    const auto b = build_basis(1);
    const auto l = generator_matrix(b, Generator::l);
    EXPECT_EQ(l.entries(b.index_of({1, 0, 0}), b.index_of({1, 0, 0})), 0.0);
    EXPECT_EQ(l.entries(b.index_of({0, 1, 0}), b.index_of({0, 1, 0})), 1.0);
    EXPECT_EQ(l.entries(b.index_of({0, 0, 1}), b.index_of({0, 0, 1})), -1.0);
    EXPECT_EQ((l.entries - Eigen::MatrixXd(l.entries.diagonal().asDiagonal())).norm(), 0.0);
}

TEST(Generators, NTauAtNTwo) {
    const auto b = build_basis(2);
    const auto n = generator_matrix(b, Generator::n_tau);
    std::multiset<double> vals(n.entries.diagonal().begin(), n.entries.diagonal().end());
    EXPECT_EQ(vals, (std::multiset<double>{0, 1, 1, 2, 2, 2}));
}

TEST(Generators, DxOnScalarStateHandComputed) {
    // D_x|1,0,0> = (1/sqrt2)(|0,1,0> - |0,0,1>), worked out by hand from
    // D_+ = sqrt2 (t+^ s - s^ t-), D_- = -sqrt2 (t-^ s - s^ t+).
    const auto b = build_basis(1);
    const auto dx = generator_matrix(b, Generator::D_x);
    const auto col = dx.entries.col(static_cast<Eigen::Index>(b.index_of({1, 0, 0})));
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(col(static_cast<Eigen::Index>(b.index_of({0, 1, 0}))), r, 1e-15);
    EXPECT_NEAR(col(static_cast<Eigen::Index>(b.index_of({0, 0, 1}))), -r, 1e-15);
    EXPECT_EQ(col(static_cast<Eigen::Index>(b.index_of({1, 0, 0}))), 0.0);
}

TEST(Generators, MatchProductSpaceOracle) {
    for (int N : {1, 2, 3, 5}) {
        const auto b = build_basis(N);
        const ProductSpace ps(N);
        for (Generator g : all_generators()) {
            if (g == Generator::D_y || g == Generator::R_y) continue;
            const auto m = generator_matrix(b, g);
            const Eigen::MatrixXd ref = ps.restrict(oracle(ps, g), b);
            EXPECT_LT(max_abs(m.entries - ref), 1e-12) << generator_name(g) << " N=" << N;
        }
    }
}

TEST(Generators, SymmetryFlags) {
    const auto b = build_basis(6);
    for (Generator g : {Generator::D_x, Generator::R_x, Generator::D_squared, Generator::Q, Generator::n_plus_Q,
                        Generator::l, Generator::n_tau, Generator::n_s}) {
        const auto m = generator_matrix(b, g);
        EXPECT_TRUE(m.symmetric) << generator_name(g);
        EXPECT_EQ((m.entries - m.entries.transpose()).cwiseAbs().maxCoeff(), 0.0) << generator_name(g);
    }
    EXPECT_FALSE(generator_matrix(b, Generator::D_plus).symmetric);
    EXPECT_FALSE(generator_matrix(b, Generator::Q_plus).symmetric);
}

TEST(Generators, ImaginaryGeneratorsRejected) {
    const auto b = build_basis(3);
    EXPECT_THROW(generator_matrix(b, Generator::D_y), InvalidParameter);
    EXPECT_THROW(generator_matrix(b, Generator::R_y), InvalidParameter);
}

TEST(Generators, ParseRoundTrip) {
    for (Generator g : all_generators()) EXPECT_EQ(parse_generator(generator_name(g)), g);
    EXPECT_THROW(parse_generator("D_z"), InvalidParameter);
}

TEST(Generators, ConserveTotalNumber) {
    const auto b = build_basis(5);
    OperatorMatrix total;
    total.basis = b.tag();
    total.entries = generator_matrix(b, Generator::n_tau).entries + generator_matrix(b, Generator::n_s).entries;
    for (Generator g : all_generators()) {
        if (g == Generator::D_y || g == Generator::R_y) continue;
        EXPECT_LT(commutator_norm(total, generator_matrix(b, g)), 1e-13) << generator_name(g);
    }
}

TEST(Generators, DSquaredLadderIdentity) {
    const auto b = build_basis(8);
    const auto Dp = generator_matrix(b, Generator::D_plus).entries;
    const auto Dm = generator_matrix(b, Generator::D_minus).entries;
    const auto l = generator_matrix(b, Generator::l).entries;
    const Eigen::MatrixXd ref = 0.5 * (Dp * Dm + Dm * Dp) + l * l;
    EXPECT_LT(max_abs(generator_matrix(b, Generator::D_squared).entries - ref), 1e-12);
}

TEST(Hamiltonian, HarmonicLimitIsDiagonal) {
    const auto b = build_basis(2);
    const auto H = build_hamiltonian({2, 0.0, 0.0}, b);
    std::multiset<double> vals;
    for (Eigen::Index i = 0; i < H.entries.rows(); ++i) vals.insert(H.entries(i, i));
    EXPECT_EQ(vals, (std::multiset<double>{0, 0.5, 0.5, 1, 1, 1}));
    EXPECT_TRUE(H.symmetric);
}

TEST(Hamiltonian, MatchesOracleFormula) {
    const int N = 5;
    const auto b = build_basis(N);
    const ProductSpace ps(N);
    const double xi = 0.3, eps = 0.7;
    const Eigen::MatrixXd ref = ps.restrict((1 - xi) / N * oracle(ps, Generator::n_tau) -
                                                xi / (N * (N - 1.0)) * oracle(ps, Generator::D_squared) -
                                                eps / N * oracle(ps, Generator::D_x),
                                            b);
    EXPECT_LT(max_abs(build_hamiltonian({N, xi, eps}, b).entries - ref), 1e-13);
}

TEST(Hamiltonian, ParameterChecks) {
    EXPECT_THROW(build_hamiltonian({1, 0.1, 0.1}, build_basis(1)), InvalidParameter);
    EXPECT_THROW(build_hamiltonian({4, 1.5, 0.1}, build_basis(4)), InvalidParameter);
    EXPECT_THROW(build_hamiltonian({4, 0.5, -0.1}, build_basis(4)), InvalidParameter);
    EXPECT_THROW(build_hamiltonian({4, 0.5, 0.1}, build_basis(5)), BasisMismatch);
}

TEST(Hamiltonian, IntegralsOfMotion) {
    for (int N : {10, 20, 40}) {
        const auto b = build_basis(N);
        const auto l = generator_matrix(b, Generator::l);
        const auto nq = generator_matrix(b, Generator::n_plus_Q);
        const auto dx = generator_matrix(b, Generator::D_x);
        const auto d2 = generator_matrix(b, Generator::D_squared);
        EXPECT_LT(commutator_norm(build_hamiltonian({N, 0.4, 0.0}, b), l), 1e-10) << N;
        EXPECT_LT(commutator_norm(build_hamiltonian({N, 0.0, 0.4}, b), nq), 1e-10) << N;
        const auto h1 = build_hamiltonian({N, 1.0, 0.4}, b);
        EXPECT_LT(commutator_norm(h1, dx), 1e-10) << N;
        EXPECT_LT(commutator_norm(h1, d2), 1e-10) << N;
        // Control: the chaotic point conserves none of them.
        EXPECT_GT(commutator_norm(build_hamiltonian({N, 0.4, 0.4}, b), l), 1e-3) << N;
    }
}

TEST(Commutator, Basics) {
    const auto b = build_basis(2);
    const auto l = generator_matrix(b, Generator::l);
    const auto dx = generator_matrix(b, Generator::D_x);
    const auto nt = generator_matrix(b, Generator::n_tau);
    EXPECT_EQ(commutator_norm(dx, dx), 0.0);
    EXPECT_EQ(commutator_norm(l, nt), 0.0);
    // Dense 6x6 product oracle with explicit loops.
    double ref = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            double c = 0.0;
            for (int k = 0; k < 6; ++k) c += l.entries(i, k) * dx.entries(k, j) - dx.entries(i, k) * l.entries(k, j);
            ref += c * c;
        }
    EXPECT_GT(ref, 0.0);
    EXPECT_NEAR(commutator_norm(l, dx), std::sqrt(ref), 1e-12);
    EXPECT_THROW(commutator_norm(l, generator_matrix(build_basis(3), Generator::l)), BasisMismatch);
}

TEST(Parity, BlockDimensionsAtNTwo) {
    // N=2 combinations: n_tau=0: 0+ ; n_tau=1: 1+ 1- ; n_tau=2: 0+ 2+ 2-.
    // H1 = {l+ even} U {l- odd} = {0+, 1-, 0+, 2+} -> 4; H2 = {1+, 2-} -> 2.
    const auto b = build_basis(2);
    const auto blocks = parity_blocks(build_hamiltonian({2, 0.3, 0.5}, b), b);
    EXPECT_EQ(blocks.block1.dim(), 4u);
    EXPECT_EQ(blocks.block2.dim(), 2u);
}

TEST(Parity, IdentityGivesIdentityBlocks) {
    for (int N : {1, 4, 7}) {
        const auto b = build_basis(N);
        const auto blocks = parity_blocks(identity_matrix(b.tag()), b);
        EXPECT_LT(max_abs(blocks.block1.entries - Eigen::MatrixXd::Identity(blocks.block1.entries.rows(),
                                                                             blocks.block1.entries.cols())),
                  1e-15);
        EXPECT_LT(max_abs(blocks.block2.entries - Eigen::MatrixXd::Identity(blocks.block2.entries.rows(),
                                                                             blocks.block2.entries.cols())),
                  1e-15);
        EXPECT_EQ(blocks.block1.dim() + blocks.block2.dim(), b.size());
    }
}

TEST(Parity, HamiltonianBlockDiagonalAndTransformOrthogonal) {
    const auto b = build_basis(12);
    const auto t = parity_transform(b);
    const auto d = static_cast<Eigen::Index>(b.size());
    EXPECT_LT(max_abs(t.U.transpose() * t.U - Eigen::MatrixXd::Identity(d, d)), 1e-14);
    for (double xi : {0.0, 0.4, 1.0}) {
        const auto blocks = parity_blocks(build_hamiltonian({12, xi, 0.4}, b), b);
        EXPECT_LT(blocks.max_cross, 1e-14);
    }
    // l anticommutes with the reflection and so couples the sectors.
    EXPECT_THROW(parity_blocks(generator_matrix(b, Generator::l), b), InvalidParameter);
}
