#include "tgnn/cp_layer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "linsolve.hpp"

namespace tgnn {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

double activate_deriv(Activation a, double x) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

Vector activate(Activation a, Vector v) {
    for (auto& x : v) x = activate(a, x);
    return v;
}

namespace {

void check_inputs(std::size_t feature_dim, std::span<const Vector> xs) {
    if (xs.empty()) throw std::invalid_argument("cp layer: empty input list");
    for (const auto& x : xs)
        if (x.size() != feature_dim)
            throw std::invalid_argument("cp layer: input dimension mismatch");
}

/// z = W^T [x; 1], accumulated feature-ascending with the homogeneous
/// coordinate added last (keeps per-entry summation order identical to the
/// batched path used in model training).
Vector lift_project(const Matrix& w, std::span<const double> x) {
    const std::size_t feat = w.rows - 1;
    Vector z(w.cols, 0.0);
    for (std::size_t f = 0; f < feat; ++f) {
        const double v = x[f];
        const double* row = w.a.data() + f * w.cols;
        for (std::size_t r = 0; r < w.cols; ++r) z[r] += v * row[r];
    }
    const double* hom = w.a.data() + feat * w.cols;
    for (std::size_t r = 0; r < w.cols; ++r) z[r] += hom[r];
    return z;
}

struct ForwardScratch {
    std::vector<Vector> z;  // per-input linear factors
    Vector fold;            // Hadamard product of all z
    Vector inner_out;       // inner activation of fold
    Vector pre_out;         // M * inner_out, before the outer activation
};

ForwardScratch cp_forward_scratch(const CpLayerParams& p, std::span<const Vector> xs,
                                  FlopCounter* flops, ForwardStats* stats) {
    check_inputs(p.feature_dim(), xs);
    const std::size_t k = xs.size();
    const std::size_t rank = p.rank();

    ForwardScratch s;
    s.z.reserve(k);
    for (const auto& x : xs) {
        s.z.push_back(lift_project(p.w, x));
        if (stats)
            for (double v : s.z.back()) stats->observe(v);
    }
    if (flops) flops->madds += static_cast<std::uint64_t>(k) * rank * (p.feature_dim() + 1);

    s.fold = s.z.front();
    for (std::size_t i = 1; i < k; ++i) {
        for (std::size_t r = 0; r < rank; ++r) s.fold[r] *= s.z[i][r];
        if (stats)
            for (double v : s.fold) stats->observe(v);
    }
    if (flops) flops->madds += static_cast<std::uint64_t>(rank) * (k - 1);

    s.inner_out = s.fold;
    for (auto& v : s.inner_out) v = activate(p.inner, v);

    s.pre_out = matvec(p.m, s.inner_out);
    if (flops) flops->madds += static_cast<std::uint64_t>(p.output_dim()) * rank;
    return s;
}

}  // namespace

Vector cp_forward(const CpLayerParams& p, std::span<const Vector> xs, FlopCounter* flops,
                  ForwardStats* stats) {
    ForwardScratch s = cp_forward_scratch(p, xs, flops, stats);
    for (auto& v : s.pre_out) v = activate(p.outer, v);
    return std::move(s.pre_out);
}

Vector cp_sum_forward(const CpSumLayerParams& p, std::span<const Vector> xs, FlopCounter* flops,
                      ForwardStats* stats) {
    if (p.w2.rows != p.feature_dim() || p.w2.cols != p.output_dim())
        throw std::invalid_argument("cp_sum layer: sum-branch shape mismatch");
    Vector y = cp_forward(p.cp, xs, flops, stats);

    Vector pooled(p.feature_dim(), 0.0);
    for (const auto& x : xs)
        for (std::size_t f = 0; f < pooled.size(); ++f) pooled[f] += x[f];
    Vector q = matvec_transposed(p.w2, pooled);
    if (flops)
        flops->madds += static_cast<std::uint64_t>(xs.size() - 1) * p.feature_dim() +
                        static_cast<std::uint64_t>(p.w2.rows) * p.w2.cols;
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += activate(p.sum_act, q[j]);
    return y;
}

LayerGradients cp_backward(const CpLayerParams& p, std::span<const Vector> xs,
                           std::span<const double> upstream) {
    if (upstream.size() != p.output_dim())
        throw std::invalid_argument("cp_backward: upstream dimension mismatch");
    ForwardScratch s = cp_forward_scratch(p, xs, nullptr, nullptr);
    const std::size_t k = xs.size();
    const std::size_t rank = p.rank();
    const std::size_t feat = p.feature_dim();

    Vector d_pre(p.output_dim());
    for (std::size_t j = 0; j < d_pre.size(); ++j)
        d_pre[j] = upstream[j] * activate_deriv(p.outer, s.pre_out[j]);

    LayerGradients g;
    g.d_m = Matrix(p.m.rows, p.m.cols);
    for (std::size_t j = 0; j < p.m.rows; ++j)
        for (std::size_t r = 0; r < rank; ++r) g.d_m(j, r) = d_pre[j] * s.inner_out[r];

    Vector d_inner = matvec_transposed(p.m, d_pre);
    Vector d_fold(rank);
    for (std::size_t r = 0; r < rank; ++r)
        d_fold[r] = d_inner[r] * activate_deriv(p.inner, s.fold[r]);

    // Leave-one-out products via prefix/suffix accumulation.
    std::vector<Vector> prefix(k, Vector(rank, 1.0));
    for (std::size_t i = 1; i < k; ++i)
        for (std::size_t r = 0; r < rank; ++r) prefix[i][r] = prefix[i - 1][r] * s.z[i - 1][r];
    Vector suffix(rank, 1.0);

    g.d_w = Matrix(p.w.rows, p.w.cols);
    g.d_x.assign(k, Vector(feat, 0.0));
    std::vector<Vector> d_z(k, Vector(rank));
    for (std::size_t i = k; i-- > 0;) {
        for (std::size_t r = 0; r < rank; ++r) d_z[i][r] = d_fold[r] * prefix[i][r] * suffix[r];
        for (std::size_t r = 0; r < rank; ++r) suffix[r] *= s.z[i][r];
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t f = 0; f < feat; ++f) {
            const double xv = xs[i][f];
            for (std::size_t r = 0; r < rank; ++r) g.d_w(f, r) += xv * d_z[i][r];
        }
        for (std::size_t r = 0; r < rank; ++r) g.d_w(feat, r) += d_z[i][r];
        for (std::size_t f = 0; f < feat; ++f) {
            double acc = 0.0;
            for (std::size_t r = 0; r < rank; ++r) acc += p.w(f, r) * d_z[i][r];
            g.d_x[i][f] = acc;
        }
    }
    return g;
}

LayerGradients cp_sum_backward(const CpSumLayerParams& p, std::span<const Vector> xs,
                               std::span<const double> upstream) {
    LayerGradients g = cp_backward(p.cp, xs, upstream);

    Vector pooled(p.feature_dim(), 0.0);
    for (const auto& x : xs)
        for (std::size_t f = 0; f < pooled.size(); ++f) pooled[f] += x[f];
    Vector q = matvec_transposed(p.w2, pooled);

    Vector d_q(q.size());
    for (std::size_t j = 0; j < q.size(); ++j)
        d_q[j] = upstream[j] * activate_deriv(p.sum_act, q[j]);

    g.d_w2 = Matrix(p.w2.rows, p.w2.cols);
    for (std::size_t f = 0; f < p.w2.rows; ++f)
        for (std::size_t j = 0; j < p.w2.cols; ++j) g.d_w2(f, j) = pooled[f] * d_q[j];

    Vector d_x_shared = matvec(p.w2, d_q);
    for (auto& dx : g.d_x)
        for (std::size_t f = 0; f < dx.size(); ++f) dx[f] += d_x_shared[f];
    return g;
}

CpLayerParams construct_sum_equivalent(std::size_t feature_dim, std::size_t k, double alpha) {
    if (feature_dim < 1 || k < 1)
        throw std::invalid_argument("construct_sum_equivalent: dimensions must be >= 1");

    // Interpolation nodes t_m = m - k/2 and coefficients c with
    // sum_m c_m t_m^p = [p == 1] for p = 0..k.
    const std::size_t nodes = k + 1;
    Vector t(nodes);
    for (std::size_t m = 0; m < nodes; ++m)
        t[m] = static_cast<double>(m) - static_cast<double>(k) / 2.0;
    Matrix vand(nodes, nodes);
    Vector rhs(nodes, 0.0);
    rhs[1] = 1.0;
    for (std::size_t p = 0; p < nodes; ++p)
        for (std::size_t m = 0; m < nodes; ++m) vand(p, m) = std::pow(t[m], static_cast<double>(p));
    const Vector c = detail::solve_linear(vand, rhs);

    const std::size_t rank = feature_dim * nodes;
    CpLayerParams layer;
    layer.inner = Activation::identity;
    layer.outer = Activation::identity;
    layer.w = Matrix(feature_dim + 1, rank, 0.0);
    layer.m = Matrix(feature_dim, rank, 0.0);
    for (std::size_t j = 0; j < feature_dim; ++j) {
        for (std::size_t m = 0; m < nodes; ++m) {
            const std::size_t col = j * nodes + m;
            layer.w(j, col) = t[m];
            layer.w(feature_dim, col) = 1.0;
            layer.m(j, col) = alpha * c[m];
        }
    }
    return layer;
}

Vector dense_oracle(const CpLayerParams& p, std::span<const Vector> xs, std::size_t max_entries) {
    if (p.inner != Activation::identity || p.outer != Activation::identity)
        throw std::invalid_argument("dense_oracle: requires identity activations");
    check_inputs(p.feature_dim(), xs);
    const std::size_t k = xs.size();
    const std::size_t lifted = p.feature_dim() + 1;

    double entries = static_cast<double>(p.output_dim());
    double work = static_cast<double>(p.rank());
    for (std::size_t i = 0; i < k; ++i) {
        entries *= static_cast<double>(lifted);
        work *= static_cast<double>(lifted);
    }
    if (entries > static_cast<double>(max_entries) || work > static_cast<double>(max_entries))
        throw std::length_error("dense_oracle: tensor too large");

    CpFactors f;
    f.factors.assign(k, p.w);
    f.factors.push_back(p.m);
    Tensor t = cp_reconstruct(f);

    for (const auto& x : xs) {
        Vector lift(x);
        lift.push_back(1.0);
        t = mode_product(t, 0, lift);
    }
    return t.data;
}

CpLayerParams init_cp_layer(std::size_t feature_dim, std::size_t rank, std::size_t output_dim,
                            Activation inner, Activation outer, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(feature_dim + 1 + rank));
    CpLayerParams p;
    p.inner = inner;
    p.outer = outer;
    p.w = Matrix::uniform(feature_dim + 1, rank, -a, a, rng);
    p.m = Matrix::uniform(output_dim, rank, -a, a, rng);
    // keep each linear factor's expected magnitude at most ~1
    const double cap = std::sqrt(3.0 / static_cast<double>(feature_dim + 1));
    if (a > cap) {
        const double s = cap / a;
        for (auto& v : p.w.a) v *= s;
    }
    return p;
}

CpSumLayerParams init_cp_sum_layer(std::size_t feature_dim, std::size_t rank,
                                   std::size_t output_dim, Activation inner, Activation outer,
                                   Activation sum_act, Rng& rng) {
    CpSumLayerParams p;
    p.cp = init_cp_layer(feature_dim, rank, output_dim, inner, outer, rng);
    const double a = std::sqrt(6.0 / static_cast<double>(feature_dim + output_dim));
    p.w2 = Matrix::uniform(feature_dim, output_dim, -a, a, rng);
    p.sum_act = sum_act;
    return p;
}

Vector baseline_pool_forward(const Matrix& proj, std::span<const Vector> xs, const char* kind,
                             FlopCounter* flops) {
    check_inputs(proj.rows, xs);
    const std::size_t feat = proj.rows;
    Vector pooled(feat, 0.0);
    if (std::strcmp(kind, "sum") == 0 || std::strcmp(kind, "mean") == 0) {
        pooled = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i)
            for (std::size_t f = 0; f < feat; ++f) pooled[f] += xs[i][f];
        if (flops) flops->madds += static_cast<std::uint64_t>(xs.size() - 1) * feat;
        if (std::strcmp(kind, "mean") == 0) {
            const double inv = 1.0 / static_cast<double>(xs.size());
            for (auto& v : pooled) v *= inv;
            if (flops) flops->madds += feat;
        }
    } else if (std::strcmp(kind, "max") == 0) {
        pooled = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i)
            for (std::size_t f = 0; f < feat; ++f) pooled[f] = std::max(pooled[f], xs[i][f]);
    } else {
        throw std::invalid_argument("baseline_pool_forward: unknown pooling " + std::string(kind));
    }
    Vector y = matvec_transposed(proj, pooled);
    if (flops) flops->madds += static_cast<std::uint64_t>(proj.rows) * proj.cols;
    return y;
}

}  // namespace tgnn
