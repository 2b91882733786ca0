#pragma once

#include "tgnn/matrix.hpp"

namespace tgnn::detail {

/// Eigendecomposition of a symmetric matrix: a = q diag(lambda) q^T,
/// eigenvalues ascending.
struct SymmetricEig {
    Vector eigenvalues;
    Matrix eigenvectors;  // columns are eigenvectors
};

SymmetricEig symmetric_eig(const Matrix& a);

/// Solve the regularized normal equations (g + ridge*I) x = b for each
/// right-hand-side row of b; returns x with the same shape as b.
/// g must be symmetric positive semi-definite (a Gram matrix).
Matrix solve_gram(const Matrix& g, const Matrix& b, double ridge);

/// Solve a square linear system a x = b (partial-pivot LU).
Vector solve_linear(const Matrix& a, const Vector& b);

}  // namespace tgnn::detail
