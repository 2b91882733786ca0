#include "tgnn/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "tgnn/cp_layer.hpp"
#include "tgnn/tensor.hpp"

namespace tgnn {

using nlohmann::json;

std::string VerifyReport::to_json() const {
    json j{{"check", check},
           {"trials", trials},
           {"failures", failures},
           {"allowed_failures", allowed_failures},
           {"max_error", max_error},
           {"tolerance", tolerance},
           {"seed", seed},
           {"elapsed_seconds", elapsed_seconds},
           {"passed", passed()},
           {"note", note}};
    return j.dump(2);
}

namespace {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

double rel_deviation(std::span<const double> a, std::span<const double> b) {
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    double dev = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::abs(a[i] - b[i]));
    return dev / scale;
}

Vector random_vector(std::size_t n, Rng& rng) {
    Vector v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

/// Direct contraction of a coefficient tensor with homogeneous-lifted inputs.
Vector contract_homogeneous(const Tensor& t, std::span<const Vector> xs) {
    Tensor cur = t;
    for (const auto& x : xs) {
        Vector lift(x);
        lift.push_back(1.0);
        cur = mode_product(cur, 0, lift);
    }
    return cur.data;
}

}  // namespace

VerifyReport verify_permutation_invariance(const PermutationDims& dims, std::size_t trials,
                                           std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "permutation_invariance";
    rep.trials = trials;
    rep.tolerance = 1e-10;
    rep.seed = seed;

    Rng base(seed);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = base.fork({trial});
        const std::size_t feat = 1 + rng.uniform_index(dims.max_feature);
        const std::size_t k = 1 + rng.uniform_index(dims.max_inputs);
        const std::size_t rank = 1 + rng.uniform_index(dims.max_rank);
        const std::size_t out = 1 + rng.uniform_index(dims.max_output);
        const CpLayerParams layer =
            init_cp_layer(feat, rank, out, Activation::tanh, Activation::relu, rng);

        std::vector<Vector> xs(k);
        for (auto& x : xs) x = random_vector(feat, rng);
        const Vector base_out = cp_forward(layer, xs);

        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        double worst = 0.0;
        do {
            std::vector<Vector> permuted(k);
            for (std::size_t i = 0; i < k; ++i) permuted[i] = xs[perm[i]];
            worst = std::max(worst, rel_deviation(base_out, cp_forward(layer, permuted)));
        } while (std::next_permutation(perm.begin(), perm.end()));

        rep.max_error = std::max(rep.max_error, worst);
        if (worst > rep.tolerance) ++rep.failures;
    }
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

VerifyReport verify_multilinear_realization(std::size_t feature_dim, std::size_t output_dim,
                                            std::size_t trials, std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "multilinear_realization_k2";
    rep.trials = trials;
    rep.tolerance = 1e-8;
    rep.seed = seed;

    Rng base(seed);
    const std::vector<std::size_t> sym_modes{0, 1};
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = base.fork({trial});
        Tensor t = Tensor::random({feature_dim + 1, feature_dim + 1, output_dim}, rng);
        t = symmetrize(t, sym_modes);

        double worst = 0.0;
        try {
            const auto cp = partially_symmetric_cp(t);
            CpLayerParams layer;
            layer.w = cp.shared;
            layer.m = cp.last;  // free factor rows = output_dim
            layer.inner = Activation::identity;
            layer.outer = Activation::identity;

            for (std::size_t probe = 0; probe < 20; ++probe) {
                std::vector<Vector> xs{random_vector(feature_dim, rng),
                                       random_vector(feature_dim, rng)};
                const Vector expected = contract_homogeneous(t, xs);
                const Vector got = cp_forward(layer, xs);
                worst = std::max(worst, rel_deviation(expected, got));
            }
        } catch (const std::exception&) {
            worst = std::numeric_limits<double>::infinity();
        }
        rep.max_error = std::max(rep.max_error, worst);
        if (!(worst <= rep.tolerance)) ++rep.failures;
    }
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

VerifyReport verify_multilinear_realization_k3(std::size_t feature_dim, std::size_t output_dim,
                                               std::size_t trials, std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "multilinear_realization_k3_als";
    rep.trials = trials;
    rep.tolerance = 1e-5;
    rep.seed = seed;
    rep.note = "iterative decomposition path; exactness not guaranteed, reported separately";

    Rng base(seed);
    std::size_t non_converged = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = base.fork({trial});
        // coefficient tensor with a known exact shared-factor decomposition
        const std::size_t true_rank = 2;
        const Matrix w_true = Matrix::uniform(feature_dim + 1, true_rank, -1.0, 1.0, rng);
        const Matrix m_true = Matrix::uniform(output_dim, true_rank, -1.0, 1.0, rng);
        CpFactors f;
        f.factors = {w_true, w_true, w_true, m_true};
        const Tensor t = cp_reconstruct(f);

        double worst = 0.0;
        try {
            PartialCpOptions opts;
            opts.seed = seed ^ (trial * 0x9e3779b9ULL + 1);
            opts.target_error = 1e-8;  // solve well below the check tolerance
            const auto cp = partially_symmetric_cp(t, opts);
            if (!cp.converged) ++non_converged;
            CpLayerParams layer;
            layer.w = cp.shared;
            layer.m = cp.last;
            layer.inner = Activation::identity;
            layer.outer = Activation::identity;
            for (std::size_t probe = 0; probe < 10; ++probe) {
                std::vector<Vector> xs{random_vector(feature_dim, rng),
                                       random_vector(feature_dim, rng),
                                       random_vector(feature_dim, rng)};
                const Vector expected = contract_homogeneous(t, xs);
                const Vector got = cp_forward(layer, xs);
                worst = std::max(worst, rel_deviation(expected, got));
            }
        } catch (const std::exception&) {
            worst = std::numeric_limits<double>::infinity();
        }
        rep.max_error = std::max(rep.max_error, worst);
        if (!(worst <= rep.tolerance)) ++rep.failures;
    }
    if (non_converged > 0)
        rep.note += "; decompositions reporting non-convergence: " + std::to_string(non_converged);
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

VerifyReport verify_sum_mean(std::size_t max_feature, std::size_t max_inputs,
                             std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "sum_mean_realization";
    rep.tolerance = 1e-8;
    rep.seed = seed;

    Rng base(seed);
    for (std::size_t feat = 1; feat <= max_feature; ++feat) {
        for (std::size_t k = 1; k <= max_inputs; ++k) {
            for (const double alpha : {1.0, 1.0 / static_cast<double>(k)}) {
                const CpLayerParams layer = construct_sum_equivalent(feat, k, alpha);
                if (layer.rank() > feat * (k + 1)) {
                    ++rep.failures;
                    rep.note = "rank bound exceeded";
                }
                Rng rng = base.fork({feat, k, alpha == 1.0 ? 0u : 1u});
                double worst = 0.0;
                for (std::size_t probe = 0; probe < 100; ++probe) {
                    std::vector<Vector> xs(k);
                    Vector expected(feat, 0.0);
                    for (auto& x : xs) {
                        x = random_vector(feat, rng);
                        for (std::size_t f = 0; f < feat; ++f) expected[f] += alpha * x[f];
                    }
                    worst = std::max(worst, rel_deviation(expected, cp_forward(layer, xs)));
                }
                rep.max_error = std::max(rep.max_error, worst);
                ++rep.trials;
                if (worst > rep.tolerance) ++rep.failures;
            }
        }
    }
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

VerifyReport verify_sum_pooling_separation(std::size_t trials, std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "sum_pooling_separation";
    rep.trials = trials;
    rep.allowed_failures = trials / 100;
    rep.tolerance = 1e-6;
    rep.seed = seed;

    const std::size_t feat = 2;
    Rng base(seed);

    // equal-sum input pairs; the first is the canonical witness
    const auto make_pairs = [&](Rng& rng) {
        std::vector<std::array<std::vector<Vector>, 2>> pairs;
        pairs.push_back({std::vector<Vector>{{1.0, 0.0}, {0.0, 1.0}},
                         std::vector<Vector>{{1.0, 1.0}, {0.0, 0.0}}});
        for (int i = 0; i < 10; ++i) {
            Vector x1 = random_vector(feat, rng);
            Vector x2 = random_vector(feat, rng);
            Vector delta = random_vector(feat, rng);
            Vector y1(feat), y2(feat);
            for (std::size_t f = 0; f < feat; ++f) {
                y1[f] = x1[f] + delta[f];
                y2[f] = x2[f] - delta[f];
            }
            pairs.push_back({std::vector<Vector>{x1, x2}, std::vector<Vector>{y1, y2}});
        }
        return pairs;
    };

    std::size_t cp_separated = 0;
    std::size_t control_separations = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = base.fork({trial});
        CpLayerParams layer;
        layer.w = Matrix::uniform(feat + 1, 1, -1.0, 1.0, rng);
        layer.m = Matrix::uniform(1, 1, -1.0, 1.0, rng);
        layer.inner = Activation::tanh;
        layer.outer = Activation::identity;

        // sum-pooling control with its own random parameters
        const Matrix w_sum = Matrix::uniform(feat, 4, -1.0, 1.0, rng);
        const Matrix m_sum = Matrix::uniform(1, 4, -1.0, 1.0, rng);
        const auto g_sum = [&](const std::vector<Vector>& xs) {
            Vector pooled(feat, 0.0);
            for (const auto& x : xs)
                for (std::size_t f = 0; f < feat; ++f) pooled[f] += x[f];
            Vector z = matvec_transposed(w_sum, pooled);
            for (auto& v : z) v = std::tanh(v);
            return matvec(m_sum, z);
        };

        bool separated = false;
        for (const auto& [a, b] : make_pairs(rng)) {
            const double diff = std::abs(cp_forward(layer, a)[0] - cp_forward(layer, b)[0]);
            rep.max_error = std::max(rep.max_error, diff);
            if (diff > rep.tolerance) separated = true;
            if (std::abs(g_sum(a)[0] - g_sum(b)[0]) > rep.tolerance) ++control_separations;
        }
        if (separated)
            ++cp_separated;
        else
            ++rep.failures;
    }
    rep.failures += control_separations;
    rep.note = "layers separating equal-sum pairs: " + std::to_string(cp_separated) + "/" +
               std::to_string(trials) +
               "; sum-pooling control separations: " + std::to_string(control_separations);
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

VerifyReport verify_flop_scaling(std::uint64_t seed) {
    Stopwatch timer;
    VerifyReport rep;
    rep.check = "flop_scaling";
    rep.seed = seed;
    rep.tolerance = 0.0;

    Rng base(seed);
    const std::size_t feats[] = {4, 16};
    const std::size_t ks[] = {1, 3, 5};
    const std::size_t ranks[] = {8, 32};

    const auto measured = [&](std::size_t feat, std::size_t k, std::size_t rank,
                              std::size_t out, Rng& rng) {
        const CpLayerParams layer =
            init_cp_layer(feat, rank, out, Activation::tanh, Activation::relu, rng);
        std::vector<Vector> xs(k);
        for (auto& x : xs) x = random_vector(feat, rng);
        FlopCounter counter;
        cp_forward(layer, xs, &counter);
        return counter.madds;
    };

    for (const std::size_t feat : feats) {
        for (const std::size_t k : ks) {
            for (const std::size_t rank : ranks) {
                Rng rng = base.fork({feat, k, rank});
                const std::size_t out = feat;
                ++rep.trials;
                const auto got = measured(feat, k, rank, out, rng);
                if (got != cp_forward_flops(feat, k, rank, out)) {
                    ++rep.failures;
                    continue;
                }
                // exactly linear in R and in k
                if (measured(feat, k, 2 * rank, out, rng) != 2 * got) ++rep.failures;
                const auto c1 = measured(feat, k + 1, rank, out, rng);
                const auto c2 = measured(feat, k + 2, rank, out, rng);
                if (c2 - c1 != c1 - got) ++rep.failures;
            }
        }
    }
    rep.elapsed_seconds = timer.seconds();
    return rep;
}

std::vector<VerifyReport> run_all_checks(std::uint64_t seed) {
    return {verify_permutation_invariance({}, 200, seed),
            verify_multilinear_realization(3, 2, 50, seed),
            verify_multilinear_realization_k3(2, 2, 10, seed),
            verify_sum_mean(4, 5, seed),
            verify_sum_pooling_separation(100, seed),
            verify_flop_scaling(seed)};
}

std::vector<std::string> check_names() {
    return {"permutation",    "multilinear",    "multilinear_als",
            "sum_mean",       "separation",     "flops"};
}

}  // namespace tgnn
