#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tgnn/matrix.hpp"
#include "tgnn/tensor.hpp"

namespace tgnn {

enum class Activation { identity, tanh, relu };

double activate(Activation a, double x);
/// Derivative evaluated at the pre-activation value (relu uses 0 at the kink).
double activate_deriv(Activation a, double x);

Vector activate(Activation a, Vector v);

/// Counts multiply-accumulate operations; a bare multiply or a bare add each
/// count as one.
struct FlopCounter {
    std::uint64_t madds = 0;
};

/// Largest absolute value seen among the per-input linear factors and their
/// running Hadamard products during a forward pass. Repeated products are the
/// layer's known numerical failure mode, so callers can watch this.
struct ForwardStats {
    double max_factor = 0.0;

    void observe(double v) {
        const double a = v < 0 ? -v : v;
        if (a > max_factor) max_factor = a;
    }
};

/// Rank-R aggregation layer over a variable-size set of F-vectors:
///   y = outer( M * inner( had_fold_i  W^T [x_i; 1] ) )
/// The homogeneous coordinate is appended last (row F of W).
struct CpLayerParams {
    Matrix w;  // (F+1) x R
    Matrix m;  // d x R
    Activation inner = Activation::tanh;
    Activation outer = Activation::relu;

    std::size_t feature_dim() const { return w.rows - 1; }
    std::size_t rank() const { return w.cols; }
    std::size_t output_dim() const { return m.rows; }
};

/// CP layer plus a linear sum-pooling residual:
///   y = cp(xs) + sum_act( W2^T sum_i x_i )
struct CpSumLayerParams {
    CpLayerParams cp;
    Matrix w2;  // F x d
    Activation sum_act = Activation::relu;

    std::size_t feature_dim() const { return cp.feature_dim(); }
    std::size_t output_dim() const { return cp.output_dim(); }
};

struct LayerGradients {
    Matrix d_w;               // matches CpLayerParams::w
    Matrix d_m;               // matches CpLayerParams::m
    Matrix d_w2;              // matches CpSumLayerParams::w2 (empty for plain CP)
    std::vector<Vector> d_x;  // one gradient per input vector
};

Vector cp_forward(const CpLayerParams& p, std::span<const Vector> xs,
                  FlopCounter* flops = nullptr, ForwardStats* stats = nullptr);

Vector cp_sum_forward(const CpSumLayerParams& p, std::span<const Vector> xs,
                      FlopCounter* flops = nullptr, ForwardStats* stats = nullptr);

LayerGradients cp_backward(const CpLayerParams& p, std::span<const Vector> xs,
                           std::span<const double> upstream);

LayerGradients cp_sum_backward(const CpSumLayerParams& p, std::span<const Vector> xs,
                               std::span<const double> upstream);

/// Multiply-add count of one cp_forward call (k inputs).
constexpr std::uint64_t cp_forward_flops(std::size_t feature_dim, std::size_t k,
                                         std::size_t rank, std::size_t output_dim) {
    return static_cast<std::uint64_t>(k) * rank * (feature_dim + 1) +
           static_cast<std::uint64_t>(rank) * (k - 1) +
           static_cast<std::uint64_t>(output_dim) * rank;
}

/// Identity-activation parameters whose forward over exactly k inputs equals
/// alpha * sum_i x_i (alpha = 1/k gives the mean). Rank F*(k+1), built by
/// polynomial interpolation on k+1 symmetric nodes.
CpLayerParams construct_sum_equivalent(std::size_t feature_dim, std::size_t k, double alpha);

/// Brute-force ground truth for cp_forward with identity activations:
/// reconstructs the full parameter tensor [[W,...,W,M]] and contracts it with
/// the homogeneous-lifted inputs mode by mode.
Vector dense_oracle(const CpLayerParams& p, std::span<const Vector> xs,
                    std::size_t max_entries = 10'000'000);

/// Random initialization: uniform +/- sqrt(6/(F+1+R)) for both factors, then
/// W rescaled so each linear factor has expected magnitude <= 1 (bounds the
/// growth of the repeated products).
CpLayerParams init_cp_layer(std::size_t feature_dim, std::size_t rank, std::size_t output_dim,
                            Activation inner, Activation outer, Rng& rng);

CpSumLayerParams init_cp_sum_layer(std::size_t feature_dim, std::size_t rank,
                                   std::size_t output_dim, Activation inner, Activation outer,
                                   Activation sum_act, Rng& rng);

// ---------------------------------------------------------------------------
// Baseline poolings (benchmark comparisons)
// ---------------------------------------------------------------------------

/// out_act( P^T pool(xs) ) with P an F x d linear map; `kind` one of
/// "sum", "mean", "max".
Vector baseline_pool_forward(const Matrix& proj, std::span<const Vector> xs,
                             const char* kind, FlopCounter* flops = nullptr);

}  // namespace tgnn
