#pragma once

#include "socnn/tensor.hpp"

namespace socnn {

/// Symmetric eigendecomposition A = U diag(S) Uᵀ.
struct EigPair {
  Tensor vectors;  ///< U, D×D, eigenvectors in columns
  Tensor values;   ///< S, length D, descending
};

struct JacobiOptions {
  int max_sweeps = 100;
  /// Convergence when the off-diagonal Frobenius norm drops to
  /// tolerance·‖A‖_F.
  double tolerance = 1e-12;
};

/// Cyclic Jacobi eigensolver. The input is symmetrized as (A + Aᵀ)/2 first.
/// Eigenvalues are sorted descending; each eigenvector is signed so that its
/// entry of largest magnitude is positive (lowest row index on ties).
/// Throws NumericError on non-finite input and ConvergenceError when the
/// sweep cap is reached.
EigPair sym_eig(const Tensor& a, const JacobiOptions& options = {});

/// Eigengaps smaller than this are replaced by ±gap_floor in the backward pass.
inline constexpr double kEigGapFloor = 1e-6;

/// Adjoint of sym_eig: given dL/dU and dL/dS returns the symmetric dL/dA
///   dA = sym( U (K ∘ (Uᵀ dU) + diag(dS)) Uᵀ ),  K_ij = 1/(S_j − S_i), K_ii = 0.
/// Either gradient may be an empty tensor, meaning zero.
Tensor sym_eig_backward(const EigPair& eig, const Tensor& d_vectors, const Tensor& d_values,
                        double gap_floor = kEigGapFloor);

struct QrResult {
  Tensor q;  ///< m×n, orthonormal columns
  Tensor r;  ///< n×n, upper triangular with positive diagonal
};

/// Householder thin QR of an m×n matrix with m ≥ n. Throws NumericError when
/// |R_ii| < 1e-12 (rank deficiency).
QrResult qr_thin(const Tensor& a);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Tensor& a);

/// Number of eigenvalues above rel_threshold · (largest eigenvalue).
std::size_t numerical_rank(const Tensor& a, double rel_threshold = 1e-8);

}  // namespace socnn
