#include "otoclab/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "otoclab/error.hpp"

namespace otoclab {

namespace {

constexpr int kSigma = 0;
constexpr int kPlus = 1;
constexpr int kMinus = 2;

// One bilinear term coef * b_i^dagger b_j.
struct Bilinear {
    double coef;
    int create;
    int annihilate;
};

using Term = std::vector<Bilinear>;

std::array<int, 3> as_array(const Occupation& s) { return {s.n_sigma, s.n_plus, s.n_minus}; }
Occupation from_array(const std::array<int, 3>& a) { return {a[0], a[1], a[2]}; }

// b_i^dagger b_j |s>, returning the amplitude and the resulting state.
std::optional<std::pair<double, Occupation>> apply(const Bilinear& op, const Occupation& s) {
    auto occ = as_array(s);
    if (occ[op.annihilate] == 0) return std::nullopt;
    const int n_in = occ[op.annihilate];
    --occ[op.annihilate];
    const double amp = std::sqrt(static_cast<double>(n_in) * static_cast<double>(occ[op.create] + 1));
    ++occ[op.create];
    return std::make_pair(op.coef * amp, from_array(occ));
}

const double kSqrt2 = std::sqrt(2.0);
const double kHalfSqrt2 = std::sqrt(2.0) / 2.0;

Term bilinears(Generator g) {
    switch (g) {
    case Generator::n_tau: return {{1.0, kPlus, kPlus}, {1.0, kMinus, kMinus}};
    case Generator::n_s: return {{1.0, kSigma, kSigma}};
    case Generator::l: return {{1.0, kPlus, kPlus}, {-1.0, kMinus, kMinus}};
    // D_+ = sqrt2 (tau_+^dag sigma - sigma^dag tau_-)
    case Generator::D_plus: return {{kSqrt2, kPlus, kSigma}, {-kSqrt2, kSigma, kMinus}};
    // D_- = -sqrt2 (tau_-^dag sigma - sigma^dag tau_+)
    case Generator::D_minus: return {{-kSqrt2, kMinus, kSigma}, {kSqrt2, kSigma, kPlus}};
    case Generator::D_x:
        return {{kHalfSqrt2, kPlus, kSigma},
                {-kHalfSqrt2, kSigma, kMinus},
                {-kHalfSqrt2, kMinus, kSigma},
                {kHalfSqrt2, kSigma, kPlus}};
    case Generator::Q_plus: return {{kSqrt2, kPlus, kMinus}};
    case Generator::Q_minus: return {{kSqrt2, kMinus, kPlus}};
    case Generator::Q: return {{1.0, kPlus, kMinus}, {1.0, kMinus, kPlus}};
    case Generator::R_x:
        return {{kHalfSqrt2, kPlus, kSigma},
                {kHalfSqrt2, kSigma, kMinus},
                {kHalfSqrt2, kMinus, kSigma},
                {kHalfSqrt2, kSigma, kPlus}};
    case Generator::n_plus_Q:
        return {{1.0, kPlus, kPlus}, {1.0, kMinus, kMinus}, {1.0, kPlus, kMinus}, {1.0, kMinus, kPlus}};
    default: break;
    }
    throw InvalidParameter("generator has no bilinear representation: " +
                           std::string(generator_name(g)));
}

Eigen::MatrixXd assemble(const FockBasis& basis, const Term& term) {
    const auto dim = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index col = 0; col < dim; ++col) {
        const auto& ket = basis.state(static_cast<std::size_t>(col));
        for (const auto& op : term) {
            if (auto r = apply(op, ket)) {
                m(static_cast<Eigen::Index>(basis.index_of(r->second)), col) += r->first;
            }
        }
    }
    return m;
}

// (D_+ D_- + D_- D_+)/2 + l^2 by applying the boson strings to each state.
Eigen::MatrixXd assemble_d_squared(const FockBasis& basis) {
    const auto dim = static_cast<Eigen::Index>(basis.size());
    const Term dp = bilinears(Generator::D_plus);
    const Term dm = bilinears(Generator::D_minus);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);

    auto accumulate = [&](const Term& left, const Term& right, Eigen::Index col) {
        const auto& ket = basis.state(static_cast<std::size_t>(col));
        for (const auto& r : right) {
            auto first = apply(r, ket);
            if (!first) continue;
            for (const auto& l : left) {
                auto second = apply(l, first->second);
                if (!second) continue;
                m(static_cast<Eigen::Index>(basis.index_of(second->second)), col) +=
                    0.5 * first->first * second->first;
            }
        }
    };

    for (Eigen::Index col = 0; col < dim; ++col) {
        accumulate(dp, dm, col);
        accumulate(dm, dp, col);
        const double l = basis.state(static_cast<std::size_t>(col)).l();
        m(col, col) += l * l;
    }
    return m;
}

bool exactly_symmetric(const Eigen::MatrixXd& m) { return m == m.transpose(); }

} // namespace

std::string BasisTag::describe() const {
    std::ostringstream os;
    switch (kind) {
    case BasisKind::Fock: os << "fock"; break;
    case BasisKind::ParityBlock: os << "parity" << block; break;
    case BasisKind::Eigen: os << "eigen"; break;
    case BasisKind::Abstract: os << "abstract"; break;
    }
    os << "(N=" << N << ", dim=" << dim;
    if (!label.empty()) os << ", " << label;
    os << ")";
    return os.str();
}

std::size_t fock_dimension(int N) {
    if (N < 0) throw InvalidParameter("boson number must be non-negative");
    const auto n = static_cast<std::size_t>(N);
    return (n + 1) * (n + 2) / 2;
}

FockBasis::FockBasis(int N) : N_(N) {
    if (N < 1) throw InvalidParameter("build_basis: N must be >= 1, got " + std::to_string(N));
    states_.reserve(fock_dimension(N));
    for (int nt = 0; nt <= N; ++nt) {
        for (int l = -nt; l <= nt; l += 2) {
            states_.push_back({N - nt, (nt + l) / 2, (nt - l) / 2});
        }
    }
    parity_.resize(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
        index_.emplace(states_[i], i);
        const int l = states_[i].l();
        const bool even = (std::abs(l) % 2) == 0;
        // l >= 0 carries the l_+ combination, l < 0 the l_- combination.
        parity_[i] = (l >= 0) ? (even ? 1 : 2) : (even ? 2 : 1);
    }
}

std::size_t FockBasis::index_of(const Occupation& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) {
        throw InvalidParameter("occupation (" + std::to_string(s.n_sigma) + "," +
                               std::to_string(s.n_plus) + "," + std::to_string(s.n_minus) +
                               ") not in basis N=" + std::to_string(N_));
    }
    return it->second;
}

bool FockBasis::contains(const Occupation& s) const { return index_.count(s) != 0; }

BasisTag FockBasis::tag() const { return {BasisKind::Fock, N_, 0, states_.size(), {}}; }

FockBasis build_basis(int N) { return FockBasis(N); }

Generator parse_generator(std::string_view name) {
    for (auto g : all_generators()) {
        if (generator_name(g) == name) return g;
    }
    throw InvalidParameter("unknown generator identifier: " + std::string(name));
}

std::string_view generator_name(Generator g) {
    switch (g) {
    case Generator::n_tau: return "n_tau";
    case Generator::n_s: return "n_s";
    case Generator::l: return "l";
    case Generator::D_plus: return "D_plus";
    case Generator::D_minus: return "D_minus";
    case Generator::D_x: return "D_x";
    case Generator::D_y: return "D_y";
    case Generator::Q_plus: return "Q_plus";
    case Generator::Q_minus: return "Q_minus";
    case Generator::Q: return "Q";
    case Generator::R_x: return "R_x";
    case Generator::R_y: return "R_y";
    case Generator::D_squared: return "D_squared";
    case Generator::n_plus_Q: return "n_plus_Q";
    }
    return "?";
}

std::vector<Generator> all_generators() {
    return {Generator::n_tau, Generator::n_s,     Generator::l,       Generator::D_plus,
            Generator::D_minus, Generator::D_x,   Generator::D_y,     Generator::Q_plus,
            Generator::Q_minus, Generator::Q,     Generator::R_x,     Generator::R_y,
            Generator::D_squared, Generator::n_plus_Q};
}

OperatorMatrix generator_matrix(const FockBasis& basis, Generator which) {
    OperatorMatrix out;
    out.basis = basis.tag();
    switch (which) {
    case Generator::D_y:
    case Generator::R_y:
        throw InvalidParameter(std::string(generator_name(which)) +
                               " has purely imaginary matrix elements in the real Fock basis; "
                               "use D_x, R_x, l, n_tau, D_squared or another real generator");
    case Generator::D_squared: {
        // Contributions arrive in different orders for (i, j) and (j, i).
        Eigen::MatrixXd m = assemble_d_squared(basis);
        out.entries = 0.5 * (m + m.transpose());
        break;
    }
    default: out.entries = assemble(basis, bilinears(which)); break;
    }
    out.symmetric = exactly_symmetric(out.entries);
    return out;
}

void ModelParams::validate() const {
    if (N < 2) throw InvalidParameter("model requires N >= 2, got " + std::to_string(N));
    if (!(xi >= 0.0 && xi <= 1.0)) throw InvalidParameter("xi must lie in [0, 1]");
    if (!(epsilon >= 0.0)) throw InvalidParameter("epsilon must be >= 0");
}

OperatorMatrix build_hamiltonian(const ModelParams& params, const FockBasis& basis) {
    params.validate();
    if (basis.N() != params.N) {
        throw BasisMismatch("build_hamiltonian: basis N=" + std::to_string(basis.N()) +
                            " but params N=" + std::to_string(params.N));
    }
    const double N = params.N;
    const auto nt = generator_matrix(basis, Generator::n_tau);
    const auto d2 = generator_matrix(basis, Generator::D_squared);
    const auto dx = generator_matrix(basis, Generator::D_x);

    OperatorMatrix h;
    h.basis = basis.tag();
    h.entries = ((1.0 - params.xi) / N) * nt.entries - (params.xi / (N * (N - 1.0))) * d2.entries -
                (params.epsilon / N) * dx.entries;
    // Each term is exactly symmetric; enforce it bitwise after the sum.
    h.entries = (0.5 * (h.entries + h.entries.transpose())).eval();
    h.symmetric = true;
    return h;
}

ParityTransform parity_transform(const FockBasis& basis) {
    const auto dim = basis.size();
    std::vector<std::size_t> order1, order2;
    for (std::size_t i = 0; i < dim; ++i) (basis.parity_of(i) == 1 ? order1 : order2).push_back(i);

    ParityTransform t;
    t.dim1 = order1.size();
    t.dim2 = order2.size();
    t.U = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));

    const double r = 1.0 / std::sqrt(2.0);
    Eigen::Index col = 0;
    for (const auto* order : {&order1, &order2}) {
        for (std::size_t i : *order) {
            const auto& s = basis.state(i);
            const auto row_i = static_cast<Eigen::Index>(i);
            if (s.l() == 0) {
                t.U(row_i, col) = 1.0;
            } else {
                const auto partner = static_cast<Eigen::Index>(
                    basis.index_of({s.n_sigma, s.n_minus, s.n_plus}));
                if (s.l() > 0) {
                    // |l_+> = (|l> + |-l>)/sqrt2
                    t.U(row_i, col) = r;
                    t.U(partner, col) = r;
                } else {
                    // |l_-> = (|l> - |-l>)/sqrt2 with |l> the partner (l > 0)
                    t.U(partner, col) = r;
                    t.U(row_i, col) = -r;
                }
            }
            ++col;
        }
    }
    return t;
}

ParityBlocks parity_blocks(const OperatorMatrix& H, const FockBasis& basis) {
    if (H.basis != basis.tag() || H.dim() != basis.size()) {
        throw BasisMismatch("parity_blocks: operator basis " + H.basis.describe() +
                            " does not match " + basis.tag().describe());
    }
    const auto t = parity_transform(basis);
    const Eigen::MatrixXd rotated = t.U.transpose() * H.entries * t.U;
    const auto d1 = static_cast<Eigen::Index>(t.dim1);
    const auto d2 = static_cast<Eigen::Index>(t.dim2);

    ParityBlocks out;
    Eigen::MatrixXd b1 = rotated.topLeftCorner(d1, d1);
    Eigen::MatrixXd b2 = rotated.bottomRightCorner(d2, d2);
    out.max_cross = (d1 > 0 && d2 > 0) ? rotated.topRightCorner(d1, d2).cwiseAbs().maxCoeff() : 0.0;
    double in_block = 0.0;
    if (d1 > 0) in_block = std::max(in_block, b1.cwiseAbs().maxCoeff());
    if (d2 > 0) in_block = std::max(in_block, b2.cwiseAbs().maxCoeff());
    if (out.max_cross > 1e-12 * in_block) {
        throw InvalidParameter("parity_blocks: operator couples the parity sectors (max cross " +
                               std::to_string(out.max_cross) + ")");
    }
    out.block1.entries = 0.5 * (b1 + b1.transpose());
    out.block2.entries = 0.5 * (b2 + b2.transpose());
    out.block1.basis = {BasisKind::ParityBlock, basis.N(), 1, t.dim1, {}};
    out.block2.basis = {BasisKind::ParityBlock, basis.N(), 2, t.dim2, {}};
    out.block1.symmetric = out.block2.symmetric = true;
    return out;
}

double commutator_norm(const OperatorMatrix& A, const OperatorMatrix& B) {
    if (A.basis != B.basis || A.dim() != B.dim()) {
        throw BasisMismatch("commutator_norm: " + A.basis.describe() + " vs " + B.basis.describe());
    }
    return (A.entries * B.entries - B.entries * A.entries).norm();
}

OperatorMatrix retag(OperatorMatrix op, BasisTag tag) {
    if (tag.dim != op.dim()) throw BasisMismatch("retag: dimension mismatch");
    op.basis = std::move(tag);
    return op;
}

OperatorMatrix identity_matrix(const BasisTag& tag) {
    const auto d = static_cast<Eigen::Index>(tag.dim);
    return {Eigen::MatrixXd::Identity(d, d), tag, true};
}

} // namespace otoclab
