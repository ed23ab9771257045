#include "otoclab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "otoclab/error.hpp"

namespace otoclab {

namespace {

constexpr double kOrthoTol = 1e-10;
constexpr double kReconTol = 1e-9;

std::uint64_t fingerprint(const Eigen::VectorXd& v) {
    std::uint64_t h = 1469598103934665603ULL;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::uint64_t bits;
        const double x = v[i];
        std::memcpy(&bits, &x, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffU;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

BasisTag eigen_tag(const BasisTag& source, const Eigen::VectorXd& energies) {
    std::ostringstream os;
    os << source.describe() << "#" << std::hex << fingerprint(energies);
    return {BasisKind::Eigen, source.N, 0, static_cast<std::size_t>(energies.size()), os.str()};
}

void fix_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        vectors.col(c).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
    }
}

void check_symmetric(const Eigen::MatrixXd& m, const char* who) {
    if (m.rows() != m.cols()) throw InvalidParameter(std::string(who) + ": matrix is not square");
    if (m.size() == 0) throw InvalidParameter(std::string(who) + ": empty matrix");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
        throw InvalidParameter(std::string(who) + ": matrix is not symmetric (max asymmetry " +
                               std::to_string(asym) + ")");
    }
}

void measure_residuals(EigenSystem& eig, const Eigen::MatrixXd& H) {
    const auto n = eig.vectors.cols();
    eig.orthonormality_residual =
        (eig.vectors.transpose() * eig.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    Eigen::MatrixXd proj = eig.vectors.transpose() * (H * eig.vectors);
    proj.diagonal() -= eig.energies;
    eig.reconstruction_residual = proj.cwiseAbs().maxCoeff();

    const double emax = std::max(eig.energies.cwiseAbs().maxCoeff(), 1e-300);
    if (eig.orthonormality_residual > kOrthoTol) {
        throw ConvergenceError("diagonalize: eigenvectors not orthonormal", eig.orthonormality_residual);
    }
    if (eig.reconstruction_residual > kReconTol * emax) {
        throw ConvergenceError("diagonalize: reconstruction residual too large",
                               eig.reconstruction_residual);
    }
}

} // namespace

EigenSystem diagonalize(const OperatorMatrix& H) {
    check_symmetric(H.entries, "diagonalize");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(H.entries, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw ConvergenceError("diagonalize: eigensolver did not converge",
                               std::numeric_limits<double>::quiet_NaN());
    }
    EigenSystem eig;
    eig.energies = solver.eigenvalues();
    eig.vectors = solver.eigenvectors();
    fix_signs(eig.vectors);
    eig.source = H.basis;
    eig.eigenbasis = eigen_tag(H.basis, eig.energies);
    measure_residuals(eig, H.entries);
    return eig;
}

EigenSystem diagonalize_by_parity(const OperatorMatrix& H, const FockBasis& basis) {
    const auto blocks = parity_blocks(H, basis);
    const auto transform = parity_transform(basis);
    const auto e1 = diagonalize(blocks.block1);
    const auto e2 = diagonalize(blocks.block2);
    const auto d1 = static_cast<Eigen::Index>(transform.dim1);
    const auto d2 = static_cast<Eigen::Index>(transform.dim2);
    const auto dim = d1 + d2;

    // (state, block) pairs ordered by energy; stable so block 1 wins ties.
    std::vector<std::pair<Eigen::Index, int>> order;
    order.reserve(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < d1; ++i) order.emplace_back(i, 1);
    for (Eigen::Index i = 0; i < d2; ++i) order.emplace_back(i, 2);
    auto energy = [&](const std::pair<Eigen::Index, int>& p) {
        return p.second == 1 ? e1.energies[p.first] : e2.energies[p.first];
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](const auto& a, const auto& b) { return energy(a) < energy(b); });

    const Eigen::MatrixXd lifted1 = transform.U.leftCols(d1) * e1.vectors;
    const Eigen::MatrixXd lifted2 = transform.U.rightCols(d2) * e2.vectors;

    EigenSystem eig;
    eig.energies.resize(dim);
    eig.vectors.resize(dim, dim);
    eig.parity.resize(static_cast<std::size_t>(dim));
    for (Eigen::Index c = 0; c < dim; ++c) {
        const auto& [i, block] = order[static_cast<std::size_t>(c)];
        eig.energies[c] = energy(order[static_cast<std::size_t>(c)]);
        eig.vectors.col(c) = (block == 1) ? lifted1.col(i) : lifted2.col(i);
        eig.parity[static_cast<std::size_t>(c)] = block;
    }
    fix_signs(eig.vectors);
    eig.source = H.basis;
    eig.eigenbasis = eigen_tag(H.basis, eig.energies);
    measure_residuals(eig, H.entries);
    return eig;
}

EigenOperator to_eigenbasis(const OperatorMatrix& V, const EigenSystem& eig) {
    if (V.basis != eig.source || V.dim() != eig.dim()) {
        throw BasisMismatch("to_eigenbasis: operator in " + V.basis.describe() +
                            ", eigensystem built from " + eig.source.describe());
    }
    check_symmetric(V.entries, "to_eigenbasis");
    Eigen::MatrixXd t = eig.vectors.transpose() * (V.entries * eig.vectors);
    return {0.5 * (t + t.transpose()), eig.eigenbasis};
}

OperatorMatrix goe_sample(std::size_t dim, std::uint64_t seed, std::uint64_t stream) {
    if (dim < 2) throw InvalidParameter("goe_sample: dim must be >= 2");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x474f45u};
    std::mt19937_64 rng(seq);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    std::normal_distribution<double> offdiag(0.0, sigma);
    std::normal_distribution<double> diag(0.0, std::sqrt(2.0) * sigma);

    const auto n = static_cast<Eigen::Index>(dim);
    OperatorMatrix m;
    m.entries.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        m.entries(j, j) = diag(rng);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double x = offdiag(rng);
            m.entries(i, j) = x;
            m.entries(j, i) = x;
        }
    }
    m.basis = {BasisKind::Abstract, 0, 0, dim, "goe"};
    m.symmetric = true;
    return m;
}

std::vector<std::size_t> degeneracies(const Eigen::VectorXd& energies, double gap_tol) {
    std::vector<std::size_t> out;
    if (energies.size() == 0) return out;
    std::size_t run = 1;
    for (Eigen::Index i = 1; i < energies.size(); ++i) {
        if (std::abs(energies[i] - energies[i - 1]) <= gap_tol) {
            ++run;
        } else {
            out.push_back(run);
            run = 1;
        }
    }
    out.push_back(run);
    return out;
}

} // namespace otoclab
