#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "otoclab/algebra.hpp"

namespace otoclab {

struct EigenSystem {
    Eigen::VectorXd energies;   // ascending
    Eigen::MatrixXd vectors;    // columns are eigenvectors in the source basis
    BasisTag source;
    BasisTag eigenbasis;        // tag carried by operators transformed into it
    std::vector<int> parity;    // per-eigenstate parity label, empty if unknown
    double orthonormality_residual = 0.0;   // max |V^T V - I|
    double reconstruction_residual = 0.0;   // max |V^T H V - diag(E)|

    std::size_t dim() const { return static_cast<std::size_t>(energies.size()); }
};

// Hermitian operator written in an eigenbasis.
struct EigenOperator {
    Eigen::MatrixXd entries;
    BasisTag basis;

    std::size_t dim() const { return static_cast<std::size_t>(entries.rows()); }
};

// Dense symmetric eigendecomposition. Each column's largest-magnitude
// component is made positive. Throws InvalidParameter for non-symmetric input
// and ConvergenceError when the residual bounds (orthonormality 1e-10,
// reconstruction 1e-9 max|E|) are not met.
EigenSystem diagonalize(const OperatorMatrix& H);

// Diagonalizes the two parity blocks separately and lifts the eigenvectors
// back to the Fock basis. Eigenstates are merged by energy, block 1 first on
// ties, and carry their parity label.
EigenSystem diagonalize_by_parity(const OperatorMatrix& H, const FockBasis& basis);

// Vec^T V Vec, symmetrized.
EigenOperator to_eigenbasis(const OperatorMatrix& V, const EigenSystem& eig);

// GOE matrix: off-diagonal N(0, 1/dim), diagonal N(0, 2/dim). Deterministic in
// (seed, stream).
OperatorMatrix goe_sample(std::size_t dim, std::uint64_t seed, std::uint64_t stream = 0);

// Sizes of runs of eigenvalues whose consecutive gaps are <= gap_tol.
std::vector<std::size_t> degeneracies(const Eigen::VectorXd& energies, double gap_tol);

} // namespace otoclab
