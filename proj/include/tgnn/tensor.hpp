#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tgnn/matrix.hpp"

namespace tgnn {

/// Dense multi-way array of doubles, row-major (last index varies fastest).
/// Modes are zero-based throughout. An empty shape denotes a scalar
/// (order 0, one entry), which arises naturally from full contractions.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() : data(1, 0.0) {}
    explicit Tensor(std::vector<std::size_t> extents);

    std::size_t order() const { return shape.size(); }
    std::size_t numel() const { return data.size(); }
    std::size_t extent(std::size_t mode) const { return shape.at(mode); }

    /// Row-major strides; stride of the last mode is 1.
    std::vector<std::size_t> strides() const;

    double& at(std::span<const std::size_t> idx);
    double at(std::span<const std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx) {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    double at(std::initializer_list<std::size_t> idx) const {
        return const_cast<Tensor*>(this)->at(idx);
    }

    static Tensor from_matrix(const Matrix& m);
    Matrix as_matrix() const;

    static Tensor random(std::vector<std::size_t> extents, Rng& rng, double lo = -1.0,
                         double hi = 1.0);
};

double frobenius_norm(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// CP factor set: factors[i] is N_i x R; all factor matrices share R columns.
struct CpFactors {
    std::vector<Matrix> factors;

    std::size_t rank() const { return factors.empty() ? 0 : factors.front().cols; }
    std::size_t order() const { return factors.size(); }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Vector algebra
// ---------------------------------------------------------------------------

/// Component-wise product of two equal-length vectors.
Vector hadamard(std::span<const double> u, std::span<const double> v);

/// Kronecker product: block b of the result is u_b * v.
Vector kronecker(std::span<const double> u, std::span<const double> v);

/// Outer product of one or more vectors; result shape is the list of lengths.
Tensor outer_product(std::span<const Vector> vectors);

// ---------------------------------------------------------------------------
// Tensor algebra
// ---------------------------------------------------------------------------

/// Contract tensor with a vector along `mode` (zero-based); order drops by one.
Tensor mode_product(const Tensor& t, std::size_t mode, std::span<const double> v);

/// Mode-`mode` matricization: N_mode x (product of the other extents).
/// Columns are ordered so that the first remaining mode varies fastest,
/// which makes  T x_1 v_1 ... x_{k-1} v_{k-1} = matricize(T, k-1) * (v_{k-1} kron ... kron v_1)
/// hold exactly.
Matrix matricize(const Tensor& t, std::size_t mode);

/// Sum of R rank-one outer products.
Tensor cp_reconstruct(const CpFactors& f);

/// True iff every transposition of the listed modes moves no entry by more
/// than tol. Listed modes must share one extent.
bool is_partially_symmetric(const Tensor& t, std::span<const std::size_t> modes,
                            double tol = 1e-10);

/// Average over all permutations of the listed modes.
Tensor symmetrize(const Tensor& t, std::span<const std::size_t> modes);

// ---------------------------------------------------------------------------
// Partially symmetric CP decomposition
// ---------------------------------------------------------------------------

struct PartialCpOptions {
    double symmetry_tol = 1e-10;
    double target_error = 1e-6;        // ALS relative reconstruction target
    double min_improvement = 1e-9;     // ALS stall threshold
    std::size_t max_iterations = 500;  // per ALS attempt
    std::size_t max_rank_doublings = 5;
    std::uint64_t seed = 20240613;
};

struct SymmetricCpResult {
    Matrix shared;  // m x R, used for the first k (symmetric) modes
    Matrix last;    // n x R, the free last mode
    double relative_error = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::string method;  // spectral | als | polarization | ...

    /// Expand into an explicit factor list (k copies of `shared` then `last`).
    CpFactors factors(std::size_t symmetric_modes) const;
};

/// Decompose a tensor that is symmetric in its first k = order-1 modes into
/// shared-factor form T ~ [[W,...,W,M]]. Order 3 uses an exact spectral path
/// (per-slice eigendecompositions, eigenvalues folded into the free factor);
/// higher orders run alternating least squares with rank doubling and, when
/// the iteration stalls above the target, an exact polarization construction
/// whose rank is larger but whose error is roundoff only.
/// Throws std::invalid_argument if the input is not partially symmetric.
/// Residual non-convergence is reported through `converged` / `relative_error`.
[[nodiscard]] SymmetricCpResult partially_symmetric_cp(const Tensor& t,
                                                       const PartialCpOptions& opts = {});

}  // namespace tgnn
