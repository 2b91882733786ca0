#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tgnn {

/// Outcome of one reproducible numerical check. A check passes when
/// failures <= allowed_failures (0 for deterministic checks, 1% of trials
/// for the probabilistic separation check).
struct VerifyReport {
    std::string check;
    std::size_t trials = 0;
    std::size_t failures = 0;
    std::size_t allowed_failures = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::uint64_t seed = 0;
    double elapsed_seconds = 0.0;
    std::string note;

    bool passed() const { return failures <= allowed_failures; }
    std::string to_json() const;
};

struct PermutationDims {
    std::size_t max_feature = 3;
    std::size_t max_inputs = 5;
    std::size_t max_rank = 8;
    std::size_t max_output = 3;
};

/// All k! input orderings of random layers produce equal outputs (1e-10).
VerifyReport verify_permutation_invariance(const PermutationDims& dims, std::size_t trials,
                                           std::uint64_t seed);

/// Random partially symmetric coefficient tensors over homogeneous indices,
/// decomposed exactly (two symmetric modes), realize their own contraction
/// map as an identity-activation layer (1e-8).
VerifyReport verify_multilinear_realization(std::size_t feature_dim, std::size_t output_dim,
                                            std::size_t trials, std::uint64_t seed);

/// Same statement for three symmetric modes through the iterative
/// decomposition path; reported separately at a relaxed 1e-5 tolerance since
/// the solver is not exact.
VerifyReport verify_multilinear_realization_k3(std::size_t feature_dim, std::size_t output_dim,
                                               std::size_t trials, std::uint64_t seed);

/// construct_sum_equivalent reproduces alpha * sum over all (F, k) cells with
/// F <= max_feature, k <= max_inputs and alpha in {1, 1/k} (1e-8), with rank
/// at most F*(k+1).
VerifyReport verify_sum_mean(std::size_t max_feature, std::size_t max_inputs, std::uint64_t seed);

/// Randomly initialized rank-1 layers distinguish equal-sum input pairs
/// (> 1e-6) while the sum-pooling control never does. Allowed failure rate 1%.
VerifyReport verify_sum_pooling_separation(std::size_t trials, std::uint64_t seed);

/// The instrumented multiply-add counter matches k*R*(F+1) + R*(k-1) + d*R
/// exactly on a 12-point grid, doubles exactly with R, and is linear in k.
VerifyReport verify_flop_scaling(std::uint64_t seed);

std::vector<VerifyReport> run_all_checks(std::uint64_t seed);

/// The check suites the CLI accepts, in report order.
std::vector<std::string> check_names();

}  // namespace tgnn
