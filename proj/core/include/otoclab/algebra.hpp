#pragma once

// Finite u(3) boson space: Fock basis, generator matrices, the model
// Hamiltonian and its parity decomposition.
//
// Modes are sigma (scalar) and tau_+/tau_- (circular). A basis state is the
// occupation triple (n_sigma, n_plus, n_minus) with fixed total N. States are
// ordered lexicographically by (n_tau, l) ascending, n_tau = n_plus + n_minus,
// l = n_plus - n_minus.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace otoclab {

struct Occupation {
    int n_sigma = 0;
    int n_plus = 0;
    int n_minus = 0;

    int n_tau() const { return n_plus + n_minus; }
    int l() const { return n_plus - n_minus; }

    auto operator<=>(const Occupation&) const = default;
};

enum class BasisKind { Fock, ParityBlock, Eigen, Abstract };

// Identifies which basis a matrix is written in. Two matrices can only be
// combined when their tags compare equal.
struct BasisTag {
    BasisKind kind = BasisKind::Abstract;
    int N = 0;          // boson number (Fock, ParityBlock, Eigen-of-model)
    int block = 0;      // parity label 1/2 for ParityBlock, 0 otherwise
    std::size_t dim = 0;
    std::string label;  // free-form disambiguator, e.g. an eigensystem id

    bool operator==(const BasisTag&) const = default;
    std::string describe() const;
};

class FockBasis {
public:
    explicit FockBasis(int N);

    int N() const { return N_; }
    std::size_t size() const { return states_.size(); }
    const std::vector<Occupation>& states() const { return states_; }
    const Occupation& state(std::size_t i) const { return states_[i]; }

    // Position of an occupation triple; throws InvalidParameter if absent.
    std::size_t index_of(const Occupation& s) const;
    bool contains(const Occupation& s) const;

    // Label in {1, 2} of the parity-basis vector assigned to this position.
    // Positions with l >= 0 carry |n_tau, |l|_+>, positions with l < 0 carry
    // |n_tau, |l|_->; H^(1) holds l_+ with even l and l_- with odd l.
    int parity_of(std::size_t i) const { return parity_[i]; }

    BasisTag tag() const;

private:
    int N_;
    std::vector<Occupation> states_;
    std::map<Occupation, std::size_t> index_;
    std::vector<int> parity_;
};

// (N + 1)(N + 2) / 2
std::size_t fock_dimension(int N);

FockBasis build_basis(int N);

struct OperatorMatrix {
    Eigen::MatrixXd entries;
    BasisTag basis;
    bool symmetric = false;

    std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }
};

enum class Generator {
    n_tau,
    n_s,
    l,
    D_plus,
    D_minus,
    D_x,
    D_y,
    Q_plus,
    Q_minus,
    Q,
    R_x,
    R_y,
    D_squared,
    n_plus_Q,
};

// Accepts the identifiers used in configs ("n_tau", "D_x", ...).
Generator parse_generator(std::string_view name);
std::string_view generator_name(Generator g);
std::vector<Generator> all_generators();

// D_y and R_y are purely imaginary in the real Fock basis and are rejected
// with InvalidParameter; every other generator has real matrix elements.
OperatorMatrix generator_matrix(const FockBasis& basis, Generator which);

struct ModelParams {
    int N = 0;
    double xi = 0.0;
    double epsilon = 0.0;

    void validate() const;
};

// H = (1 - xi)/N n_tau - xi/(N(N - 1)) D^2 - epsilon/N D_x
OperatorMatrix build_hamiltonian(const ModelParams& params, const FockBasis& basis);

// Orthogonal change of basis from Fock to parity vectors. Columns are the
// parity vectors, H^(1) first then H^(2), each in Fock-position order.
struct ParityTransform {
    Eigen::MatrixXd U;
    std::size_t dim1 = 0;
    std::size_t dim2 = 0;
};

ParityTransform parity_transform(const FockBasis& basis);

struct ParityBlocks {
    OperatorMatrix block1;
    OperatorMatrix block2;
    double max_cross = 0.0;   // largest coupling found between the blocks
};

// Throws InvalidParameter when the operator couples the two sectors beyond
// 1e-12 of its largest in-block element.
ParityBlocks parity_blocks(const OperatorMatrix& H, const FockBasis& basis);

// Frobenius norm of AB - BA.
double commutator_norm(const OperatorMatrix& A, const OperatorMatrix& B);

// Same entries, new basis tag. Used when a u(3) operator is reused against an
// abstract (GOE) Hamiltonian of equal dimension.
OperatorMatrix retag(OperatorMatrix op, BasisTag tag);

OperatorMatrix identity_matrix(const BasisTag& tag);

} // namespace otoclab
