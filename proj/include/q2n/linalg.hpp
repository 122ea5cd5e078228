#pragma once

#include <vector>

#include "q2n/tensor.hpp"

namespace q2n {

// Descending non-negative eigenvalues (absolute values) of a symmetric
// matrix together with orthonormal eigenvectors; column j of `vectors`
// belongs to values[j].
struct EigenBasis {
    std::vector<double> values;
    Tensor vectors;
};

// Orthogonal projector onto a trailing eigenvector span.
struct Projector {
    Tensor matrix;
};

// --- dense kernels ---------------------------------------------------------

// C = A * B.
Tensor matmul(const Tensor& a, const Tensor& b);

// C = A * B^T (row-against-row dot products).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

double frobenius_norm(const Tensor& a);
double max_abs(const Tensor& a);

// X (m x c) -> X * X^T, bitwise symmetric by construction.
Tensor gram(const Tensor& x);

// --- decompositions --------------------------------------------------------

// Symmetric eigendecomposition via Householder tridiagonalization and
// implicit-shift QL. Deterministic: eigenvalues sorted descending by
// magnitude (ties keep ascending original index), each eigenvector's
// largest-magnitude component made non-negative (lowest index on ties).
EigenBasis sym_eig(const Tensor& s);

// Reference decomposition: full Golub-Kahan-Reinsch SVD returning singular
// values and left singular vectors under the same ordering and sign
// conventions as sym_eig. Kept independent of the sym_eig code path; used
// by tests and the bench command.
EigenBasis svd_oracle(const Tensor& s);

// Delta = U1 * U1^T where U1 = columns k..m-1 of U. k == m gives the zero
// matrix, k == 0 gives the identity (for orthonormal U).
Projector projector_from_basis(const Tensor& u, int64_t k);

// --- diagnostics used by tests and the acceptance suite --------------------

// max |(V^T V - I)[i][j]|.
double orthonormality_residual(const Tensor& v);

// ||V diag(values) V^T - S||_F / max(1, ||S||_F).
double reconstruction_residual(const EigenBasis& eb, const Tensor& s);

// Solves SPD A x = b in place via Cholesky; throws numerical_error when a
// pivot is not positive. Returns the lower factor for reuse.
Tensor cholesky_lower(const Tensor& a);

} // namespace q2n
