#include "tgnn/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace tgnn {

using nlohmann::json;

void TgnnConfig::validate() const {
    if (num_layers < 1) throw std::invalid_argument("config: num_layers must be >= 1");
    if (rank < 1) throw std::invalid_argument("config: rank must be >= 1");
    if (hidden < 1) throw std::invalid_argument("config: hidden must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("config: dropout must lie in [0, 1)");
    if (!cp_branch && !sum_branch)
        throw std::invalid_argument("config: at least one branch must be enabled");
}

TgnnModel init_model(const TgnnConfig& config, std::size_t feature_dim,
                     std::size_t num_classes) {
    config.validate();
    if (num_classes < 1) throw std::invalid_argument("init_model: no classes");
    Rng rng(config.seed);
    TgnnModel model;
    model.train_cp = config.cp_branch;
    std::size_t in_dim = feature_dim;
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        Rng layer_rng = rng.fork({0x11, l});
        CpSumLayerParams layer =
            init_cp_sum_layer(in_dim, config.rank, config.hidden, config.inner_activation,
                              config.outer_activation, config.sum_activation, layer_rng);
        if (!config.cp_branch) {
            layer.cp.w.fill(0.0);
            layer.cp.m.fill(0.0);
        }
        if (!config.sum_branch) layer.w2 = Matrix();
        model.layers.push_back(std::move(layer));
        in_dim = config.hidden;
    }
    {
        Rng head_rng = rng.fork({0x22});
        const double a = std::sqrt(6.0 / static_cast<double>(config.hidden + num_classes));
        model.head_w = Matrix::uniform(config.hidden, num_classes, -a, a, head_rng);
        model.head_b = Matrix(1, num_classes, 0.0);
    }
    if (config.readout) {
        Rng ro_rng = rng.fork({0x33});
        model.readout_layer =
            init_cp_layer(config.hidden, config.rank, config.hidden, config.inner_activation,
                          config.outer_activation, ro_rng);
    }
    return model;
}

void visit_params(TgnnModel& model,
                  const std::function<void(const std::string&, Matrix&)>& fn) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const std::string prefix = "layers." + std::to_string(l) + ".";
        if (model.train_cp) {
            fn(prefix + "w", layer.cp.w);
            fn(prefix + "m", layer.cp.m);
        }
        if (!layer.w2.empty()) fn(prefix + "w2", layer.w2);
    }
    fn("head.w", model.head_w);
    fn("head.b", model.head_b);
    if (model.readout_layer) {
        fn("readout.w", model.readout_layer->w);
        fn("readout.m", model.readout_layer->m);
    }
}

// ---------------------------------------------------------------------------
// Batched layer kernels
// ---------------------------------------------------------------------------

namespace {

/// Z = [X; 1] W, accumulated feature-ascending with the homogeneous row added
/// last (same per-entry summation order as the per-call path).
Matrix lifted_project_all(const Matrix& x, const Matrix& w) {
    if (w.rows != x.cols + 1) throw std::invalid_argument("layer: input dimension mismatch");
    Matrix z(x.rows, w.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* zr = z.a.data() + i * z.cols;
        for (std::size_t f = 0; f < x.cols; ++f) {
            const double v = x(i, f);
            if (v == 0.0) continue;
            const double* wr = w.a.data() + f * w.cols;
            for (std::size_t r = 0; r < w.cols; ++r) zr[r] += v * wr[r];
        }
        const double* hom = w.a.data() + x.cols * w.cols;
        for (std::size_t r = 0; r < w.cols; ++r) zr[r] += hom[r];
    }
    return z;
}

struct LayerCache {
    Matrix input;  // post-dropout
    Matrix z;      // n x R
    Matrix s;      // n x d, empty when no sum branch
    Matrix out;    // n x d
};

LayerCache layer_forward_batched(const CpSumLayerParams& layer, Matrix input,
                                 std::span<const SampledNeighborhood> samples,
                                 ForwardStats* stats) {
    if (samples.size() != input.rows)
        throw std::invalid_argument("layer: one sampled neighborhood per node required");
    const std::size_t n = input.rows;
    const std::size_t rank = layer.cp.rank();
    const std::size_t d = layer.output_dim();
    const bool has_sum = !layer.w2.empty();

    LayerCache cache;
    cache.z = lifted_project_all(input, layer.cp.w);
    if (stats)
        for (double v : cache.z.a) stats->observe(v);
    if (has_sum) cache.s = matmul(input, layer.w2);
    cache.input = std::move(input);
    cache.out = Matrix(n, d);

    Vector fold(rank), q(d);
    for (std::size_t v = 0; v < n; ++v) {
        const auto& members = samples[v].members;
        const double* z0 = cache.z.a.data() + members.front() * rank;
        std::copy(z0, z0 + rank, fold.begin());
        for (std::size_t i = 1; i < members.size(); ++i) {
            const double* zi = cache.z.a.data() + members[i] * rank;
            for (std::size_t r = 0; r < rank; ++r) fold[r] *= zi[r];
            if (stats)
                for (double f : fold) stats->observe(f);
        }
        double* out = cache.out.a.data() + v * d;
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            const double* mr = layer.cp.m.a.data() + j * rank;
            for (std::size_t r = 0; r < rank; ++r) acc += mr[r] * activate(layer.cp.inner, fold[r]);
            out[j] = activate(layer.cp.outer, acc);
        }
        if (has_sum) {
            std::fill(q.begin(), q.end(), 0.0);
            for (NodeId u : members) {
                const double* su = cache.s.a.data() + u * d;
                for (std::size_t j = 0; j < d; ++j) q[j] += su[j];
            }
            for (std::size_t j = 0; j < d; ++j) out[j] += activate(layer.sum_act, q[j]);
        }
    }
    return cache;
}

struct LayerGradAccum {
    Matrix d_w;   // empty when the CP branch is frozen
    Matrix d_m;
    Matrix d_w2;  // empty when no sum branch
};

/// Backward through one layer; returns the gradient w.r.t. the (post-dropout)
/// input, or an empty matrix when `need_input_grad` is false.
Matrix layer_backward_batched(const CpSumLayerParams& layer, const LayerCache& cache,
                              std::span<const SampledNeighborhood> samples, const Matrix& d_out,
                              bool train_cp, bool need_input_grad, LayerGradAccum& acc) {
    const std::size_t n = cache.input.rows;
    const std::size_t rank = layer.cp.rank();
    const std::size_t d = layer.output_dim();
    const bool has_sum = !layer.w2.empty();

    Matrix d_z(n, rank);
    Matrix d_s;
    if (has_sum) d_s = Matrix(n, d);
    acc.d_m = Matrix(layer.cp.m.rows, layer.cp.m.cols);

    Vector fold(rank), inner_out(rank), pre(d), d_pre(d), d_fold(rank);
    std::vector<Vector> prefix;
    for (std::size_t v = 0; v < n; ++v) {
        const auto& members = samples[v].members;
        const std::size_t k = members.size();

        // recompute the forward intermediates from cached Z
        if (prefix.size() < k) prefix.resize(k, Vector(rank));
        std::fill(prefix[0].begin(), prefix[0].end(), 1.0);
        for (std::size_t i = 1; i < k; ++i) {
            const double* zi = cache.z.a.data() + members[i - 1] * rank;
            for (std::size_t r = 0; r < rank; ++r) prefix[i][r] = prefix[i - 1][r] * zi[r];
        }
        {
            const double* zl = cache.z.a.data() + members[k - 1] * rank;
            for (std::size_t r = 0; r < rank; ++r) fold[r] = prefix[k - 1][r] * zl[r];
        }
        for (std::size_t r = 0; r < rank; ++r) inner_out[r] = activate(layer.cp.inner, fold[r]);
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            const double* mr = layer.cp.m.a.data() + j * rank;
            for (std::size_t r = 0; r < rank; ++r) s += mr[r] * inner_out[r];
            pre[j] = s;
        }

        const double* up = d_out.a.data() + v * d;
        for (std::size_t j = 0; j < d; ++j)
            d_pre[j] = up[j] * activate_deriv(layer.cp.outer, pre[j]);

        for (std::size_t j = 0; j < d; ++j) {
            const double dp = d_pre[j];
            if (dp == 0.0) continue;
            double* row = acc.d_m.a.data() + j * rank;
            for (std::size_t r = 0; r < rank; ++r) row[r] += dp * inner_out[r];
        }

        for (std::size_t r = 0; r < rank; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += layer.cp.m(j, r) * d_pre[j];
            d_fold[r] = s * activate_deriv(layer.cp.inner, fold[r]);
        }

        // leave-one-out: walk members backwards keeping a running suffix
        Vector suffix(rank, 1.0);
        for (std::size_t i = k; i-- > 0;) {
            double* dz = d_z.a.data() + members[i] * rank;
            const double* zi = cache.z.a.data() + members[i] * rank;
            for (std::size_t r = 0; r < rank; ++r) {
                dz[r] += d_fold[r] * prefix[i][r] * suffix[r];
                suffix[r] *= zi[r];
            }
        }

        if (has_sum) {
            Vector q(d, 0.0);
            for (NodeId u : members) {
                const double* su = cache.s.a.data() + u * d;
                for (std::size_t j = 0; j < d; ++j) q[j] += su[j];
            }
            for (std::size_t j = 0; j < d; ++j) {
                const double dq = up[j] * activate_deriv(layer.sum_act, q[j]);
                if (dq == 0.0) continue;
                for (NodeId u : members) d_s(u, j) += dq;
            }
        }
    }

    const Matrix input_t = transpose(cache.input);
    if (train_cp) {
        acc.d_w = Matrix(layer.cp.w.rows, layer.cp.w.cols);
        const Matrix top = matmul(input_t, d_z);
        for (std::size_t f = 0; f < top.rows; ++f)
            for (std::size_t r = 0; r < rank; ++r) acc.d_w(f, r) = top(f, r);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t r = 0; r < rank; ++r)
                acc.d_w(cache.input.cols, r) += d_z(v, r);
    } else {
        acc.d_m.fill(0.0);  // frozen branch contributes nothing
    }
    if (has_sum) acc.d_w2 = matmul(input_t, d_s);

    if (!need_input_grad) return {};
    Matrix d_input(n, cache.input.cols);
    {
        Matrix w_top_t(rank, cache.input.cols);
        for (std::size_t f = 0; f < cache.input.cols; ++f)
            for (std::size_t r = 0; r < rank; ++r) w_top_t(r, f) = layer.cp.w(f, r);
        d_input = matmul(d_z, w_top_t);
    }
    if (has_sum) {
        const Matrix w2_t = transpose(layer.w2);
        const Matrix from_sum = matmul(d_s, w2_t);
        for (std::size_t i = 0; i < d_input.a.size(); ++i) d_input.a[i] += from_sum.a[i];
    }
    return d_input;
}

}  // namespace

Matrix layer_apply(const CpSumLayerParams& layer, const Graph& g, const Matrix& embeddings,
                   std::span<const SampledNeighborhood> samples, const Matrix* dropout_mask,
                   ForwardStats* stats) {
    if (embeddings.rows != g.n) throw std::invalid_argument("layer_apply: embedding rows != n");
    Matrix input = embeddings;
    if (dropout_mask) {
        if (!dropout_mask->same_shape(input))
            throw std::invalid_argument("layer_apply: dropout mask shape mismatch");
        for (std::size_t i = 0; i < input.a.size(); ++i) input.a[i] *= dropout_mask->a[i];
    }
    return layer_forward_batched(layer, std::move(input), samples, stats).out;
}

// ---------------------------------------------------------------------------
// Stacked forward/backward
// ---------------------------------------------------------------------------

namespace {

Matrix make_dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    Matrix mask(rows, cols);
    const double scale = 1.0 / (1.0 - p);
    for (auto& v : mask.a) v = rng.uniform() < p ? 0.0 : scale;
    return mask;
}

struct StackCache {
    std::vector<Matrix> masks;  // empty matrices when dropout is off
    std::vector<LayerCache> layers;
    Matrix logits;
};

StackCache forward_stack(const TgnnModel& model, const Graph& g,
                         std::span<const SampledNeighborhood> samples, double dropout,
                         Rng* dropout_rng, ForwardStats* stats) {
    StackCache cache;
    Matrix h = g.features;
    for (const auto& layer : model.layers) {
        Matrix mask;
        if (dropout > 0.0 && dropout_rng)
            mask = make_dropout_mask(h.rows, h.cols, dropout, *dropout_rng);
        if (!mask.empty())
            for (std::size_t i = 0; i < h.a.size(); ++i) h.a[i] *= mask.a[i];
        cache.masks.push_back(std::move(mask));
        cache.layers.push_back(layer_forward_batched(layer, std::move(h), samples, stats));
        h = cache.layers.back().out;
    }
    cache.logits = matmul(h, model.head_w);
    for (std::size_t i = 0; i < cache.logits.rows; ++i)
        for (std::size_t j = 0; j < cache.logits.cols; ++j)
            cache.logits(i, j) += model.head_b(0, j);
    return cache;
}

struct StackGradients {
    std::vector<LayerGradAccum> layers;
    Matrix d_head_w;
    Matrix d_head_b;
};

StackGradients backward_stack(const TgnnModel& model, const StackCache& cache,
                              std::span<const SampledNeighborhood> samples,
                              const Matrix& d_logits) {
    StackGradients grads;
    grads.layers.resize(model.layers.size());

    const Matrix& h_last = cache.layers.back().out;
    grads.d_head_w = matmul(transpose(h_last), d_logits);
    grads.d_head_b = Matrix(1, d_logits.cols);
    for (std::size_t i = 0; i < d_logits.rows; ++i)
        for (std::size_t j = 0; j < d_logits.cols; ++j) grads.d_head_b(0, j) += d_logits(i, j);

    Matrix d_h = matmul(d_logits, transpose(model.head_w));
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        Matrix d_in = layer_backward_batched(model.layers[l], cache.layers[l], samples, d_h,
                                             model.train_cp, /*need_input_grad=*/l > 0,
                                             grads.layers[l]);
        if (l == 0) break;
        if (!cache.masks[l].empty())
            for (std::size_t i = 0; i < d_in.a.size(); ++i) d_in.a[i] *= cache.masks[l].a[i];
        d_h = std::move(d_in);
    }
    return grads;
}

}  // namespace

Matrix forward_node(const TgnnModel& model, const Graph& g,
                    std::span<const SampledNeighborhood> samples) {
    return forward_stack(model, g, samples, 0.0, nullptr, nullptr).logits;
}

Vector forward_graph(const TgnnModel& model, const Graph& g,
                     std::span<const SampledNeighborhood> samples) {
    if (!model.readout_layer)
        throw std::invalid_argument("forward_graph: model has no readout layer");
    if (g.n == 0) throw std::invalid_argument("forward_graph: empty graph");
    StackCache cache = forward_stack(model, g, samples, 0.0, nullptr, nullptr);
    const Matrix& h = cache.layers.back().out;
    std::vector<Vector> embeddings;
    embeddings.reserve(g.n);
    for (std::size_t v = 0; v < g.n; ++v) {
        const auto row = h.row(v);
        embeddings.emplace_back(row.begin(), row.end());
    }
    const Vector pooled = cp_forward(*model.readout_layer, embeddings);
    Vector logits = matvec_transposed(model.head_w, pooled);
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += model.head_b(0, j);
    return logits;
}

// ---------------------------------------------------------------------------
// Loss and optimizer
// ---------------------------------------------------------------------------

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels,
                         std::span<const std::uint8_t> mask) {
    if (labels.size() != logits.rows || mask.size() != logits.rows)
        throw std::invalid_argument("cross_entropy: size mismatch");
    std::size_t count = 0;
    for (std::size_t v = 0; v < mask.size(); ++v)
        if (mask[v]) ++count;
    if (count == 0) throw std::invalid_argument("cross_entropy: empty mask");

    LossResult res;
    res.d_logits = Matrix(logits.rows, logits.cols);
    const double inv = 1.0 / static_cast<double>(count);
    Vector p(logits.cols);
    for (std::size_t v = 0; v < logits.rows; ++v) {
        if (!mask[v]) continue;
        const int y = labels[v];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw std::invalid_argument("cross_entropy: masked node without a valid label");
        const auto row = logits.row(v);
        double mx = row[0];
        for (double x : row) mx = std::max(mx, x);
        double z = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            p[j] = std::exp(row[j] - mx);
            z += p[j];
        }
        res.loss += -(row[static_cast<std::size_t>(y)] - mx - std::log(z)) * inv;
        for (std::size_t j = 0; j < row.size(); ++j) {
            double grad = p[j] / z;
            if (j == static_cast<std::size_t>(y)) grad -= 1.0;
            res.d_logits(v, j) = grad * inv;
        }
    }
    return res;
}

double accuracy(const Matrix& logits, std::span<const int> labels,
                std::span<const std::uint8_t> mask) {
    std::size_t count = 0, correct = 0;
    for (std::size_t v = 0; v < logits.rows; ++v) {
        if (!mask[v] || labels[v] < 0) continue;
        ++count;
        const auto row = logits.row(v);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[arg]) arg = j;
        if (static_cast<int>(arg) == labels[v]) ++correct;
    }
    return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr,
               double weight_decay, std::size_t t, double beta1, double beta2, double eps) {
    if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(param.a.size(), 0.0);
        state.v.assign(param.a.size(), 0.0);
    }
    if (state.m.size() != param.a.size())
        throw std::invalid_argument("adam_step: state size mismatch");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.a.size(); ++i) {
        const double g = grad.a[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        param.a[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * param.a[i]);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

NanLossError::NanLossError(std::size_t epoch_, double max_factor_)
    : std::runtime_error("training loss became non-finite at epoch " + std::to_string(epoch_) +
                         " (largest Hadamard factor magnitude seen: " +
                         std::to_string(max_factor_) + ")"),
      epoch(epoch_),
      max_factor(max_factor_) {}

namespace {

struct ParamRef {
    std::string name;
    Matrix* param;
};

std::vector<ParamRef> collect_params(TgnnModel& model) {
    std::vector<ParamRef> out;
    visit_params(model, [&](const std::string& name, Matrix& m) { out.push_back({name, &m}); });
    return out;
}

std::vector<std::pair<std::string, Matrix>> stack_grads_to_named(const TgnnModel& model,
                                                                 const StackGradients& grads) {
    std::vector<std::pair<std::string, Matrix>> named;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        if (model.train_cp) {
            named.emplace_back(prefix + "w", grads.layers[l].d_w);
            named.emplace_back(prefix + "m", grads.layers[l].d_m);
        }
        if (!model.layers[l].w2.empty()) named.emplace_back(prefix + "w2", grads.layers[l].d_w2);
    }
    named.emplace_back("head.w", grads.d_head_w);
    named.emplace_back("head.b", grads.d_head_b);
    if (model.readout_layer) {
        // node-level training never reaches the readout
        named.emplace_back("readout.w",
                           Matrix(model.readout_layer->w.rows, model.readout_layer->w.cols));
        named.emplace_back("readout.m",
                           Matrix(model.readout_layer->m.rows, model.readout_layer->m.cols));
    }
    return named;
}

}  // namespace

ModelGradients model_loss_and_gradients(TgnnModel& model, const Graph& g,
                                        std::span<const SampledNeighborhood> samples,
                                        std::span<const std::uint8_t> mask) {
    StackCache cache = forward_stack(model, g, samples, 0.0, nullptr, nullptr);
    LossResult loss = cross_entropy(cache.logits, g.labels, mask);
    StackGradients grads = backward_stack(model, cache, samples, loss.d_logits);
    ModelGradients out;
    out.loss = loss.loss;
    out.grads = stack_grads_to_named(model, grads);
    return out;
}

TrainReport train(const Graph& g, const TgnnConfig& config, TgnnModel* out_model) {
    config.validate();
    if (config.task != Task::node_classification)
        throw std::invalid_argument("train: only node classification is trainable");
    if (g.masks.empty()) throw std::invalid_argument("train: graph has no split masks");

    const auto t_start = std::chrono::steady_clock::now();
    TgnnModel model = init_model(config, g.feature_dim(), g.num_classes);
    auto params = collect_params(model);
    std::vector<AdamState> states(params.size());

    const auto eval_samples = sample_all_neighbors(g, config.sample_size, config.seed, kEvalEpoch);

    TrainReport report;
    report.seed = config.seed;
    double best_val = -1.0;
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::uint64_t sample_epoch = config.freeze_samples ? 0 : epoch;
        const auto samples =
            sample_all_neighbors(g, config.sample_size, config.seed, sample_epoch);

        Rng dropout_rng = Rng(config.seed).fork({0xD0, epoch});
        ForwardStats stats;
        StackCache cache = forward_stack(model, g, samples, config.dropout, &dropout_rng, &stats);
        LossResult loss = cross_entropy(cache.logits, g.labels, g.masks.train);
        if (!std::isfinite(loss.loss)) throw NanLossError(epoch, stats.max_factor);

        StackGradients grads = backward_stack(model, cache, samples, loss.d_logits);
        const auto named = stack_grads_to_named(model, grads);
        for (std::size_t i = 0; i < params.size(); ++i)
            adam_step(*params[i].param, named[i].second, states[i], config.learning_rate,
                      config.weight_decay, epoch + 1);

        const Matrix logits = forward_node(model, g, eval_samples);
        EpochRecord rec;
        rec.train_loss = loss.loss;
        rec.train_acc = accuracy(logits, g.labels, g.masks.train);
        if (std::count(g.masks.val.begin(), g.masks.val.end(), 1) > 0) {
            rec.val_loss = cross_entropy(logits, g.labels, g.masks.val).loss;
            rec.val_acc = accuracy(logits, g.labels, g.masks.val);
        }
        report.epochs.push_back(rec);

        if (rec.val_acc > best_val) {
            best_val = rec.val_acc;
            best_epoch = epoch;
            report.test_acc = accuracy(logits, g.labels, g.masks.test);
        }
        report.final_train_acc = rec.train_acc;
        if (epoch - best_epoch >= config.patience && epoch + 1 < config.epochs) {
            report.early_stopped = true;
            break;
        }
    }
    report.best_val_epoch = best_epoch;
    report.best_val_acc = std::max(best_val, 0.0);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (out_model) *out_model = std::move(model);
    return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "identity";
}

Activation activation_from(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation: " + s);
}

json config_to_json_obj(const TgnnConfig& c) {
    return json{{"num_layers", c.num_layers},
                {"hidden", c.hidden},
                {"rank", c.rank},
                {"cp_branch", c.cp_branch},
                {"sum_branch", c.sum_branch},
                {"dropout", c.dropout},
                {"sample_size", c.sample_size},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"task", c.task == Task::node_classification ? "node_classification"
                                                             : "graph_classification"},
                {"patience", c.patience},
                {"freeze_samples", c.freeze_samples},
                {"inner_activation", activation_name(c.inner_activation)},
                {"outer_activation", activation_name(c.outer_activation)},
                {"sum_activation", activation_name(c.sum_activation)},
                {"readout", c.readout}};
}

TgnnConfig config_from_json_obj(const json& j) {
    TgnnConfig c;
    c.num_layers = j.value("num_layers", c.num_layers);
    c.hidden = j.value("hidden", c.hidden);
    c.rank = j.value("rank", c.rank);
    c.cp_branch = j.value("cp_branch", c.cp_branch);
    c.sum_branch = j.value("sum_branch", c.sum_branch);
    c.dropout = j.value("dropout", c.dropout);
    c.sample_size = j.value("sample_size", c.sample_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    const std::string task = j.value("task", std::string("node_classification"));
    if (task == "node_classification")
        c.task = Task::node_classification;
    else if (task == "graph_classification")
        c.task = Task::graph_classification;
    else
        throw std::invalid_argument("unknown task: " + task);
    c.patience = j.value("patience", c.patience);
    c.freeze_samples = j.value("freeze_samples", c.freeze_samples);
    c.inner_activation = activation_from(j.value("inner_activation", std::string("tanh")));
    c.outer_activation = activation_from(j.value("outer_activation", std::string("relu")));
    c.sum_activation = activation_from(j.value("sum_activation", std::string("relu")));
    c.readout = j.value("readout", c.readout);
    c.validate();
    return c;
}

}  // namespace

std::string config_to_json(const TgnnConfig& c) { return config_to_json_obj(c).dump(2); }

TgnnConfig config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

std::string TrainReport::to_json() const {
    json eps = json::array();
    for (const auto& e : epochs)
        eps.push_back(json{{"train_loss", e.train_loss},
                           {"train_acc", e.train_acc},
                           {"val_loss", e.val_loss},
                           {"val_acc", e.val_acc}});
    json j{{"epochs_run", epochs.size()},
           {"best_val_epoch", best_val_epoch},
           {"best_val_acc", best_val_acc},
           {"test_acc", test_acc},
           {"final_train_acc", final_train_acc},
           {"wall_time_seconds", wall_time_seconds},
           {"seed", seed},
           {"early_stopped", early_stopped},
           {"history", std::move(eps)}};
    return j.dump(2);
}

void save_checkpoint(const std::string& path, const TgnnModel& model, const TgnnConfig& config) {
    json params = json::object();
    visit_params(const_cast<TgnnModel&>(model), [&](const std::string& name, Matrix& m) {
        params[name] = json{{"shape", {m.rows, m.cols}}, {"data", m.a}};
    });
    json j{{"format", "tgnn-checkpoint-v1"},
           {"config", config_to_json_obj(config)},
           {"feature_dim", model.layers.front().feature_dim()},
           {"num_classes", model.num_classes()},
           {"params", std::move(params)}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    if (j.value("format", std::string()) != "tgnn-checkpoint-v1")
        throw std::runtime_error("unrecognized checkpoint format in " + path);
    Checkpoint ck;
    ck.config = config_from_json_obj(j.at("config"));
    ck.model = init_model(ck.config, j.at("feature_dim").get<std::size_t>(),
                          j.at("num_classes").get<std::size_t>());
    const auto& params = j.at("params");
    visit_params(ck.model, [&](const std::string& name, Matrix& m) {
        const auto& entry = params.at(name);
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] != m.rows || shape[1] != m.cols)
            throw std::runtime_error("checkpoint parameter shape mismatch for " + name);
        m.a = entry.at("data").get<std::vector<double>>();
        if (m.a.size() != m.rows * m.cols)
            throw std::runtime_error("checkpoint parameter size mismatch for " + name);
    });
    return ck;
}

}  // namespace tgnn
