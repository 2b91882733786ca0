#include "tgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "linsolve.hpp"

namespace tgnn {

Tensor::Tensor(std::vector<std::size_t> extents) : shape(std::move(extents)) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e < 1) throw std::invalid_argument("Tensor: all extents must be >= 1");
        n *= e;
    }
    data.assign(n, 0.0);
}

std::vector<std::size_t> Tensor::strides() const {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

double& Tensor::at(std::span<const std::size_t> idx) {
    if (idx.size() != shape.size()) throw std::invalid_argument("Tensor::at: index order mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) flat = flat * shape[i] + idx[i];
    return data[flat];
}

double Tensor::at(std::span<const std::size_t> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

Tensor Tensor::from_matrix(const Matrix& m) {
    Tensor t({m.rows, m.cols});
    t.data = m.a;
    return t;
}

Matrix Tensor::as_matrix() const {
    if (order() != 2) throw std::invalid_argument("Tensor::as_matrix: order != 2");
    Matrix m(shape[0], shape[1]);
    m.a = data;
    return m;
}

Tensor Tensor::random(std::vector<std::size_t> extents, Rng& rng, double lo, double hi) {
    Tensor t(std::move(extents));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double frobenius_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double r = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        r = std::max(r, std::abs(a.data[i] - b.data[i]));
    return r;
}

void CpFactors::validate() const {
    if (factors.empty()) throw std::invalid_argument("CpFactors: no factor matrices");
    const std::size_t r = factors.front().cols;
    if (r < 1) throw std::invalid_argument("CpFactors: rank must be >= 1");
    for (const auto& f : factors)
        if (f.cols != r) throw std::invalid_argument("CpFactors: factor column counts differ");
}

Vector hadamard(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("hadamard: length mismatch");
    Vector out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] * v[i];
    return out;
}

Vector kronecker(std::span<const double> u, std::span<const double> v) {
    Vector out(u.size() * v.size());
    std::size_t p = 0;
    for (double a : u)
        for (double b : v) out[p++] = a * b;
    return out;
}

Tensor outer_product(std::span<const Vector> vectors) {
    if (vectors.empty()) throw std::invalid_argument("outer_product: empty vector list");
    std::vector<std::size_t> shape;
    shape.reserve(vectors.size());
    for (const auto& v : vectors) {
        if (v.empty()) throw std::invalid_argument("outer_product: empty vector");
        shape.push_back(v.size());
    }
    Tensor t(std::move(shape));
    // row-major fill: last vector varies fastest
    Vector acc{1.0};
    for (const auto& v : vectors) {
        Vector next(acc.size() * v.size());
        std::size_t p = 0;
        for (double a : acc)
            for (double b : v) next[p++] = a * b;
        acc = std::move(next);
    }
    t.data = std::move(acc);
    return t;
}

Tensor mode_product(const Tensor& t, std::size_t mode, std::span<const double> v) {
    if (mode >= t.order()) throw std::invalid_argument("mode_product: mode out of range");
    if (v.size() != t.shape[mode])
        throw std::invalid_argument("mode_product: vector length does not match extent");

    std::vector<std::size_t> out_shape;
    out_shape.reserve(t.order() - 1);
    for (std::size_t i = 0; i < t.order(); ++i)
        if (i != mode) out_shape.push_back(t.shape[i]);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < mode; ++i) outer *= t.shape[i];
    for (std::size_t i = mode + 1; i < t.order(); ++i) inner *= t.shape[i];
    const std::size_t mid = t.shape[mode];

    Tensor out(std::move(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t m = 0; m < mid; ++m) {
            const double w = v[m];
            if (w == 0.0) continue;
            const double* src = t.data.data() + (o * mid + m) * inner;
            double* dst = out.data.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
        }
    }
    return out;
}

Matrix matricize(const Tensor& t, std::size_t mode) {
    if (mode >= t.order()) throw std::invalid_argument("matricize: mode out of range");
    const std::size_t n_mode = t.shape[mode];
    const std::size_t n_cols = t.numel() / n_mode;
    Matrix m(n_mode, n_cols);

    // Column strides: the first remaining mode varies fastest.
    std::vector<std::size_t> col_stride(t.order(), 0);
    {
        std::size_t acc = 1;
        for (std::size_t i = 0; i < t.order(); ++i) {
            if (i == mode) continue;
            col_stride[i] = acc;
            acc *= t.shape[i];
        }
    }

    std::vector<std::size_t> idx(t.order(), 0);
    for (std::size_t flat = 0; flat < t.numel(); ++flat) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < t.order(); ++i)
            if (i != mode) col += idx[i] * col_stride[i];
        m(idx[mode], col) = t.data[flat];
        // advance row-major multi-index (last mode fastest)
        for (std::size_t i = t.order(); i-- > 0;) {
            if (++idx[i] < t.shape[i]) break;
            idx[i] = 0;
        }
    }
    return m;
}

Tensor cp_reconstruct(const CpFactors& f) {
    f.validate();
    std::vector<std::size_t> shape;
    shape.reserve(f.order());
    for (const auto& m : f.factors) shape.push_back(m.rows);
    Tensor t(std::move(shape));
    const std::size_t r_max = f.rank();
    for (std::size_t r = 0; r < r_max; ++r) {
        Vector acc{1.0};
        for (const auto& m : f.factors) {
            Vector next(acc.size() * m.rows);
            std::size_t p = 0;
            for (double a : acc)
                for (std::size_t i = 0; i < m.rows; ++i) next[p++] = a * m(i, r);
            acc = std::move(next);
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += acc[i];
    }
    return t;
}

namespace {

void check_modes(const Tensor& t, std::span<const std::size_t> modes) {
    if (modes.empty()) throw std::invalid_argument("mode set is empty");
    for (std::size_t m : modes)
        if (m >= t.order()) throw std::invalid_argument("mode out of range");
    const std::size_t e = t.shape[modes.front()];
    for (std::size_t m : modes)
        if (t.shape[m] != e)
            throw std::invalid_argument("listed modes do not share one extent");
}

}  // namespace

bool is_partially_symmetric(const Tensor& t, std::span<const std::size_t> modes, double tol) {
    check_modes(t, modes);
    if (modes.size() < 2) return true;
    std::vector<std::size_t> idx(t.order(), 0);
    std::vector<std::size_t> swapped(t.order(), 0);
    for (std::size_t a_pos = 0; a_pos < modes.size(); ++a_pos) {
        for (std::size_t b_pos = a_pos + 1; b_pos < modes.size(); ++b_pos) {
            const std::size_t a = modes[a_pos], b = modes[b_pos];
            std::fill(idx.begin(), idx.end(), 0);
            for (std::size_t flat = 0; flat < t.numel(); ++flat) {
                swapped.assign(idx.begin(), idx.end());
                std::swap(swapped[a], swapped[b]);
                if (std::abs(t.data[flat] - t.at(swapped)) > tol) return false;
                for (std::size_t i = t.order(); i-- > 0;) {
                    if (++idx[i] < t.shape[i]) break;
                    idx[i] = 0;
                }
            }
        }
    }
    return true;
}

Tensor symmetrize(const Tensor& t, std::span<const std::size_t> modes) {
    check_modes(t, modes);
    std::vector<std::size_t> sorted_modes(modes.begin(), modes.end());
    std::sort(sorted_modes.begin(), sorted_modes.end());

    Tensor out(t.shape);
    std::vector<std::size_t> perm(sorted_modes.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t n_perms = 0;
    std::vector<std::size_t> idx(t.order(), 0);
    std::vector<std::size_t> permuted(t.order(), 0);
    do {
        ++n_perms;
        std::fill(idx.begin(), idx.end(), 0);
        for (std::size_t flat = 0; flat < t.numel(); ++flat) {
            permuted.assign(idx.begin(), idx.end());
            for (std::size_t j = 0; j < sorted_modes.size(); ++j)
                permuted[sorted_modes[j]] = idx[sorted_modes[perm[j]]];
            out.data[flat] += t.at(permuted);
            for (std::size_t i = t.order(); i-- > 0;) {
                if (++idx[i] < t.shape[i]) break;
                idx[i] = 0;
            }
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    for (auto& v : out.data) v /= static_cast<double>(n_perms);
    return out;
}

CpFactors SymmetricCpResult::factors(std::size_t symmetric_modes) const {
    CpFactors f;
    f.factors.assign(symmetric_modes, shared);
    f.factors.push_back(last);
    f.validate();
    return f;
}

namespace {

SymmetricCpResult zero_result(std::size_t m, std::size_t n) {
    SymmetricCpResult r;
    r.shared = Matrix(m, 1, 0.0);
    r.last = Matrix(n, 1, 0.0);
    r.relative_error = 0.0;
    r.converged = true;
    r.iterations = 0;
    r.method = "zero";
    return r;
}

double relative_recon_error(const Tensor& t, const Matrix& shared, const Matrix& last,
                            std::size_t k, double norm_t) {
    CpFactors f;
    f.factors.assign(k, shared);
    f.factors.push_back(last);
    const Tensor recon = cp_reconstruct(f);
    double s = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const double d = t.data[i] - recon.data[i];
        s += d * d;
    }
    return std::sqrt(s) / norm_t;
}

/// Exact shared-factor decomposition of an order-3 tensor with symmetric
/// frontal slices: each slice contributes its eigenvectors to the shared
/// factor, with eigenvalues (signs included) folded into the free factor.
SymmetricCpResult spectral_order3(const Tensor& t) {
    const std::size_t m = t.shape[0];
    const std::size_t n = t.shape[2];
    const double scale = frobenius_norm(t);
    const double drop_tol = 1e-13 * std::max(1.0, scale);

    std::vector<Vector> shared_cols;
    std::vector<std::pair<std::size_t, double>> last_cols;  // (slice, eigenvalue)
    for (std::size_t s = 0; s < n; ++s) {
        Matrix slice(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) slice(i, j) = t.at({i, j, s});
        const auto eig = detail::symmetric_eig(slice);
        for (std::size_t j = 0; j < m; ++j) {
            if (std::abs(eig.eigenvalues[j]) <= drop_tol) continue;
            Vector q(m);
            for (std::size_t i = 0; i < m; ++i) q[i] = eig.eigenvectors(i, j);
            shared_cols.push_back(std::move(q));
            last_cols.emplace_back(s, eig.eigenvalues[j]);
        }
    }
    if (shared_cols.empty()) return zero_result(m, n);

    SymmetricCpResult r;
    r.shared = Matrix(m, shared_cols.size());
    r.last = Matrix(n, shared_cols.size(), 0.0);
    for (std::size_t c = 0; c < shared_cols.size(); ++c) {
        for (std::size_t i = 0; i < m; ++i) r.shared(i, c) = shared_cols[c][i];
        r.last(last_cols[c].first, c) = last_cols[c].second;
    }
    r.relative_error = relative_recon_error(t, r.shared, r.last, 2, scale);
    r.converged = true;
    r.iterations = 0;
    r.method = "spectral";
    return r;
}

/// Khatri-Rao design matrix over all modes except `skip`, with the first
/// remaining mode varying fastest down the rows (the matricize column order).
Matrix kr_design(const Tensor& t, const Matrix& shared, const Matrix& last,
                 std::size_t skip) {
    const std::size_t order = t.order();
    const std::size_t rank = shared.cols;
    std::size_t rows = 1;
    std::vector<std::size_t> rem;
    for (std::size_t i = 0; i < order; ++i)
        if (i != skip) {
            rem.push_back(i);
            rows *= t.shape[i];
        }
    Matrix z(rows, rank, 1.0);
    std::size_t stride = 1;
    for (std::size_t mode : rem) {
        const Matrix& f = (mode + 1 == order) ? last : shared;
        const std::size_t e = t.shape[mode];
        for (std::size_t row = 0; row < rows; ++row) {
            const std::size_t i = (row / stride) % e;
            for (std::size_t r = 0; r < rank; ++r) z(row, r) *= f(i, r);
        }
        stride *= e;
    }
    return z;
}

Matrix gram(const Matrix& m) {
    Matrix g(m.cols, m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t a = 0; a < m.cols; ++a) {
            const double v = m(i, a);
            if (v == 0.0) continue;
            for (std::size_t b = 0; b < m.cols; ++b) g(a, b) += v * m(i, b);
        }
    return g;
}

/// Exact shared-factor decomposition of any partially symmetric tensor via
/// polarization: each symmetric frontal slice S satisfies
///   Sym(e_{j1} o ... o e_{jk}) = 1/(2^k k!) sum_eps (prod eps) (sum_l eps_l e_{jl})^{ok}
/// so expanding S in the symmetrized monomial basis yields an explicit sum of
/// symmetric rank-one powers. Deterministic and exact up to roundoff; the
/// realized rank is large (one column per multiset-sign combination).
SymmetricCpResult polarization_partial_cp(const Tensor& t) {
    const std::size_t order = t.order();
    const std::size_t k = order - 1;
    const std::size_t m = t.shape[0];
    const std::size_t n = t.shape[order - 1];
    const double norm_t = frobenius_norm(t);
    const double drop_tol = 1e-14 * std::max(1.0, norm_t);

    double k_factorial = 1.0;
    for (std::size_t i = 2; i <= k; ++i) k_factorial *= static_cast<double>(i);
    const double pow2k = std::ldexp(1.0, static_cast<int>(k));

    std::vector<Vector> shared_cols;
    std::vector<std::pair<std::size_t, double>> last_entries;

    std::vector<std::size_t> tuple(k, 0);  // non-decreasing index tuples = multisets
    std::vector<std::size_t> full_idx(order, 0);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(tuple.begin(), tuple.end(), 0);
        bool more = true;
        while (more) {
            std::copy(tuple.begin(), tuple.end(), full_idx.begin());
            full_idx[k] = s;
            const double value = t.at(full_idx);
            if (std::abs(value) > drop_tol) {
                // number of distinct permutations of the multiset
                double count = k_factorial;
                for (std::size_t i = 0; i < k;) {
                    std::size_t j = i;
                    while (j < k && tuple[j] == tuple[i]) ++j;
                    double run_fact = 1.0;
                    for (std::size_t r = 2; r <= j - i; ++r) run_fact *= static_cast<double>(r);
                    count /= run_fact;
                    i = j;
                }
                // signs with eps_1 fixed to +1 (the mirrored half is identical)
                for (std::size_t bits = 0; bits < (std::size_t{1} << (k - 1)); ++bits) {
                    Vector v(m, 0.0);
                    double sign_product = 1.0;
                    for (std::size_t l = 0; l < k; ++l) {
                        const double eps =
                            (l == 0 || ((bits >> (l - 1)) & 1) == 0) ? 1.0 : -1.0;
                        sign_product *= eps;
                        v[tuple[l]] += eps;
                    }
                    shared_cols.push_back(std::move(v));
                    last_entries.emplace_back(
                        s, value * count * sign_product * 2.0 / (pow2k * k_factorial));
                }
            }
            more = false;
            for (std::size_t pos = k; pos-- > 0;) {
                if (tuple[pos] + 1 < m) {
                    const std::size_t next = tuple[pos] + 1;
                    for (std::size_t i = pos; i < k; ++i) tuple[i] = next;
                    more = true;
                    break;
                }
            }
        }
    }

    if (shared_cols.empty()) return zero_result(m, n);
    SymmetricCpResult r;
    r.shared = Matrix(m, shared_cols.size());
    r.last = Matrix(n, shared_cols.size(), 0.0);
    for (std::size_t c = 0; c < shared_cols.size(); ++c) {
        for (std::size_t i = 0; i < m; ++i) r.shared(i, c) = shared_cols[c][i];
        r.last(last_entries[c].first, c) = last_entries[c].second;
    }
    r.relative_error = relative_recon_error(t, r.shared, r.last, k, norm_t);
    r.converged = true;
    r.method = "polarization";
    return r;
}

SymmetricCpResult als_partial_cp(const Tensor& t, const PartialCpOptions& opts) {
    const std::size_t order = t.order();
    const std::size_t k = order - 1;
    const std::size_t m = t.shape[0];
    const std::size_t n = t.shape[order - 1];
    const double norm_t = frobenius_norm(t);

    std::vector<std::size_t> sorted_extents(t.shape);
    std::sort(sorted_extents.begin(), sorted_extents.end());
    std::size_t rank = sorted_extents[0] * sorted_extents[1];

    SymmetricCpResult best;
    best.relative_error = std::numeric_limits<double>::infinity();

    Rng base(opts.seed);
    for (std::size_t attempt = 0; attempt <= opts.max_rank_doublings; ++attempt, rank *= 2) {
        Rng rng = base.fork({rank, attempt});
        Matrix shared = Matrix::uniform(m, rank, -1.0, 1.0, rng);
        Matrix last = Matrix::uniform(n, rank, -1.0, 1.0, rng);

        double prev = std::numeric_limits<double>::infinity();
        std::size_t iter = 0;
        for (; iter < opts.max_iterations; ++iter) {
            for (std::size_t j = 0; j < order; ++j) {
                const bool is_last = (j + 1 == order);
                const Matrix z = kr_design(t, shared, last, j);
                const Matrix g = gram(z);
                const Matrix b = matmul(matricize(t, j), z);
                double ridge = 0.0;
                for (std::size_t d = 0; d < g.rows; ++d) ridge += g(d, d);
                ridge = 1e-12 * (ridge / static_cast<double>(g.rows) + 1.0);
                Matrix f = detail::solve_gram(g, b, ridge);
                if (is_last)
                    last = std::move(f);
                else
                    shared = std::move(f);
            }
            const double err = relative_recon_error(t, shared, last, k, norm_t);
            if (err < best.relative_error) {
                best.shared = shared;
                best.last = last;
                best.relative_error = err;
                best.iterations = iter + 1;
            }
            if (err <= opts.target_error) {
                best.converged = true;
                best.method = "als";
                return best;
            }
            if (prev - err < opts.min_improvement * std::max(prev, 1e-300)) break;  // stalled
            prev = err;
        }
    }
    // stalled at every rank: fall back to the exact construction
    SymmetricCpResult exact = polarization_partial_cp(t);
    if (exact.relative_error < best.relative_error) return exact;
    best.converged = best.relative_error <= opts.target_error;
    best.method = "als";
    return best;
}

}  // namespace

SymmetricCpResult partially_symmetric_cp(const Tensor& t, const PartialCpOptions& opts) {
    if (t.order() < 2)
        throw std::invalid_argument("partially_symmetric_cp: tensor order must be >= 2");
    std::vector<std::size_t> sym_modes(t.order() - 1);
    std::iota(sym_modes.begin(), sym_modes.end(), 0);
    if (!is_partially_symmetric(t, sym_modes, opts.symmetry_tol))
        throw std::invalid_argument(
            "partially_symmetric_cp: tensor is not symmetric in its leading modes");

    const std::size_t m = t.shape[0];
    const std::size_t n = t.shape[t.order() - 1];
    if (frobenius_norm(t) == 0.0) return zero_result(m, n);

    if (t.order() == 2) {
        // T = W M^T with W the identity: exact and trivially "shared".
        SymmetricCpResult r;
        r.shared = Matrix(m, m, 0.0);
        for (std::size_t i = 0; i < m; ++i) r.shared(i, i) = 1.0;
        r.last = transpose(t.as_matrix());
        r.relative_error = 0.0;
        r.converged = true;
        r.method = "identity";
        return r;
    }
    if (t.order() == 3) return spectral_order3(t);
    return als_partial_cp(t, opts);
}

}  // namespace tgnn
