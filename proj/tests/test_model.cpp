#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <functional>

#include "test_helpers.hpp"
#include "tgnn/model.hpp"

using namespace tgnn;
using testing::floored_rel_error;
using testing::random_vector;

namespace {

Graph path3_graph(Rng& rng) {
    // 0 - 1 - 2
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}};
    Matrix features = Matrix::uniform(3, 2, -1.0, 1.0, rng);
    return build_graph(edges, std::move(features), {0, 1, 0});
}

std::vector<Vector> gather(const Matrix& h, const std::vector<NodeId>& members) {
    std::vector<Vector> xs;
    for (NodeId u : members) {
        const auto row = h.row(u);
        xs.emplace_back(row.begin(), row.end());
    }
    return xs;
}

Graph permuted_graph(const Graph& g, const std::vector<NodeId>& perm) {
    // perm[v] = new id of old node v
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t v = 0; v < g.n; ++v)
        for (NodeId u : g.neighbors(static_cast<NodeId>(v)))
            if (u > v) edges.emplace_back(perm[v], perm[u]);
    Matrix features(g.n, g.feature_dim());
    std::vector<int> labels(g.n);
    for (std::size_t v = 0; v < g.n; ++v) {
        std::copy(g.features.row(v).begin(), g.features.row(v).end(),
                  features.row(perm[v]).begin());
        labels[perm[v]] = g.labels[v];
    }
    return build_graph(edges, std::move(features), std::move(labels));
}

}  // namespace

TEST_CASE("layer_apply: isolated node reduces to the single-input layer") {
    Rng rng(71);
    const Graph g = build_graph({}, Matrix::uniform(1, 3, -1, 1, rng), {0});
    CpSumLayerParams layer;
    layer.cp = init_cp_layer(3, 4, 2, Activation::tanh, Activation::relu, rng);
    layer.w2 = Matrix::uniform(3, 2, -1, 1, rng);

    const auto samples = sample_all_neighbors(g, 5, 1);
    const Matrix out = layer_apply(layer, g, g.features, samples);
    const Vector expect = cp_sum_forward(layer, gather(g.features, {0}));
    CHECK(testing::max_abs_diff(out.row(0), expect) == 0.0);
}

TEST_CASE("layer_apply matches per-node evaluation on a 3-node path") {
    Rng rng(73);
    const Graph g = path3_graph(rng);
    CpSumLayerParams layer;
    layer.cp = init_cp_layer(2, 3, 2, Activation::tanh, Activation::relu, rng);
    layer.w2 = Matrix::uniform(2, 2, -1, 1, rng);

    const auto samples = sample_all_neighbors(g, 5, 3);
    const Matrix out = layer_apply(layer, g, g.features, samples);
    for (std::size_t v = 0; v < g.n; ++v) {
        const Vector expect = cp_sum_forward(layer, gather(g.features, samples[v].members));
        CHECK(testing::rel_deviation(expect, Vector(out.row(v).begin(), out.row(v).end())) <=
              1e-12);
    }
}

TEST_CASE("layer_apply: identical member embeddings depend only on k") {
    Rng rng(75);
    // star: node 0 connected to 1..3; all nodes share one embedding vector
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}, {0, 3}};
    Matrix features(4, 2);
    const Vector shared = random_vector(2, rng);
    for (std::size_t v = 0; v < 4; ++v)
        std::copy(shared.begin(), shared.end(), features.row(v).begin());
    const Graph g = build_graph(edges, std::move(features), {0, 0, 0, 0});

    CpSumLayerParams layer;
    layer.cp = init_cp_layer(2, 3, 2, Activation::tanh, Activation::relu, rng);
    layer.w2 = Matrix::uniform(2, 2, -1, 1, rng);
    const auto samples = sample_all_neighbors(g, 5, 1);
    const Matrix out = layer_apply(layer, g, g.features, samples);
    // nodes 1..3 all see k=2 (self + center) with the same shared vector
    for (std::size_t v = 2; v < 4; ++v)
        CHECK(testing::max_abs_diff(out.row(1), out.row(v)) == 0.0);
}

TEST_CASE("forward_node: identity head exposes first-layer embeddings") {
    Rng rng(77);
    const Graph g = path3_graph(rng);
    TgnnConfig config;
    config.num_layers = 1;
    config.hidden = 4;
    config.rank = 3;
    config.seed = 9;
    TgnnModel model = init_model(config, g.feature_dim(), 4);
    model.head_w = Matrix(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) model.head_w(i, i) = 1.0;
    model.head_b.fill(0.0);

    const auto samples = sample_all_neighbors(g, 5, 9);
    const Matrix logits = forward_node(model, g, samples);
    const Matrix h1 = layer_apply(model.layers[0], g, g.features, samples);
    for (std::size_t i = 0; i < logits.a.size(); ++i) CHECK(logits.a[i] == h1.a[i]);
}

TEST_CASE("forward_node is equivariant under node relabeling") {
    Rng rng(79);
    const Graph g = path3_graph(rng);
    const std::vector<NodeId> perm{2, 0, 1};
    const Graph h = permuted_graph(g, perm);

    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 3;
    config.rank = 4;
    config.seed = 4;
    const TgnnModel model = init_model(config, g.feature_dim(), 2);

    // full neighborhoods so both graphs aggregate identical member sets
    const auto sg = sample_all_neighbors(g, 10, 0);
    const auto sh = sample_all_neighbors(h, 10, 0);
    const Matrix lg = forward_node(model, g, sg);
    const Matrix lh = forward_node(model, h, sh);
    for (std::size_t v = 0; v < g.n; ++v)
        CHECK(testing::rel_deviation(Vector(lg.row(v).begin(), lg.row(v).end()),
                                     Vector(lh.row(perm[v]).begin(), lh.row(perm[v]).end())) <=
              1e-10);
}

TEST_CASE("forward_node is bitwise deterministic in eval mode") {
    Rng rng(81);
    const Graph g = make_separable(30, 5);
    TgnnConfig config;
    config.seed = 3;
    config.hidden = 4;
    config.rank = 4;
    const TgnnModel model = init_model(config, g.feature_dim(), g.num_classes);
    const auto samples = sample_all_neighbors(g, 5, 3, kEvalEpoch);
    const Matrix a = forward_node(model, g, samples);
    const Matrix b = forward_node(model, g, samples);
    for (std::size_t i = 0; i < a.a.size(); ++i) CHECK(a.a[i] == b.a[i]);
}

TEST_CASE("forward_graph: single node reduces to the k=1 readout") {
    Rng rng(83);
    const Graph g = build_graph({}, Matrix::uniform(1, 2, -1, 1, rng), {0});
    TgnnConfig config;
    config.num_layers = 1;
    config.hidden = 3;
    config.rank = 2;
    config.readout = true;
    config.task = Task::graph_classification;
    const TgnnModel model = init_model(config, 2, 2);

    const auto samples = sample_all_neighbors(g, 5, 0);
    const Vector logits = forward_graph(model, g, samples);

    // hand composition of the same pieces
    const Matrix h = layer_apply(model.layers[0], g, g.features, samples);
    const Vector pooled = cp_forward(*model.readout_layer, gather(h, {0}));
    Vector expect = matvec_transposed(model.head_w, pooled);
    for (std::size_t j = 0; j < expect.size(); ++j) expect[j] += model.head_b(0, j);
    CHECK(testing::max_abs_diff(logits, expect) == 0.0);
}

TEST_CASE("forward_graph is invariant under graph isomorphism") {
    Rng rng(85);
    const Graph g = path3_graph(rng);
    const Graph h = permuted_graph(g, {1, 2, 0});

    TgnnConfig config;
    config.num_layers = 1;
    config.hidden = 3;
    config.rank = 3;
    config.readout = true;
    config.task = Task::graph_classification;
    config.seed = 6;
    const TgnnModel model = init_model(config, g.feature_dim(), 2);

    const Vector a = forward_graph(model, g, sample_all_neighbors(g, 10, 0));
    const Vector b = forward_graph(model, h, sample_all_neighbors(h, 10, 0));
    CHECK(testing::rel_deviation(a, b) <= 1e-10);
}

TEST_CASE("forward_graph on a two-node fixture matches hand evaluation") {
    // two connected nodes, all weights hand-set to simple values
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}};
    Matrix features(2, 1);
    features(0, 0) = 2.0;
    features(1, 0) = 3.0;
    const Graph g = build_graph(edges, std::move(features), {0, 1});

    TgnnModel model;
    CpSumLayerParams layer;
    layer.cp.w = Matrix(2, 1, 1.0);
    layer.cp.m = Matrix(1, 1, 1.0);
    layer.cp.inner = Activation::identity;
    layer.cp.outer = Activation::identity;
    layer.w2 = Matrix(1, 1, 0.0);
    layer.sum_act = Activation::identity;
    model.layers.push_back(layer);
    CpLayerParams readout;
    readout.w = Matrix(2, 1, 1.0);
    readout.m = Matrix(1, 1, 1.0);
    readout.inner = Activation::identity;
    readout.outer = Activation::identity;
    model.readout_layer = readout;
    model.head_w = Matrix(1, 1, 1.0);
    model.head_b = Matrix(1, 1, 0.0);

    // each node aggregates both: h = (2+1)(3+1) = 12 for both nodes
    // readout over (12, 12): (12+1)(12+1) = 169
    const Vector logits = forward_graph(model, g, sample_all_neighbors(g, 5, 0));
    REQUIRE(logits.size() == 1);
    CHECK(logits[0] == 169.0);

    TgnnModel no_readout = model;
    no_readout.readout_layer.reset();
    CHECK_THROWS_AS(forward_graph(no_readout, g, sample_all_neighbors(g, 5, 0)),
                    std::invalid_argument);
}

TEST_CASE("cross_entropy worked examples") {
    Matrix logits(1, 2, 0.0);
    const std::vector<int> labels{0};
    const std::vector<std::uint8_t> mask{1};
    const LossResult r = cross_entropy(logits, labels, mask);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix confident(1, 2, 0.0);
    confident(0, 0) = 60.0;
    CHECK(cross_entropy(confident, labels, mask).loss < 1e-12);

    const std::vector<std::uint8_t> empty_mask{0};
    CHECK_THROWS_AS(cross_entropy(logits, labels, empty_mask), std::invalid_argument);
}

TEST_CASE("cross_entropy gradient matches finite differences") {
    Rng rng(87);
    Matrix logits = Matrix::uniform(4, 3, -1.0, 1.0, rng);
    const std::vector<int> labels{0, 2, 1, 0};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};
    const LossResult r = cross_entropy(logits, labels, mask);

    double worst = 0.0;
    const double eps = 1e-6;
    for (std::size_t i = 0; i < logits.a.size(); ++i) {
        const double saved = logits.a[i];
        logits.a[i] = saved + eps;
        const double up = cross_entropy(logits, labels, mask).loss;
        logits.a[i] = saved - eps;
        const double down = cross_entropy(logits, labels, mask).loss;
        logits.a[i] = saved;
        worst = std::max(worst, std::abs(r.d_logits.a[i] - (up - down) / (2 * eps)));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("adam: zero gradient with zero decay leaves parameters unchanged") {
    Matrix p(2, 2, 1.5);
    const Matrix g(2, 2, 0.0);
    AdamState state;
    adam_step(p, g, state, 0.1, 0.0, 1);
    for (double v : p.a) CHECK(v == 1.5);
}

TEST_CASE("adam: constant gradient step magnitude approaches lr") {
    Matrix p(1, 1, 0.0);
    Matrix g(1, 1, 3.0);
    AdamState state;
    const double lr = 0.01;
    double prev = p(0, 0);
    double step = 0.0;
    for (std::size_t t = 1; t <= 500; ++t) {
        adam_step(p, g, state, lr, 0.0, t);
        step = prev - p(0, 0);
        prev = p(0, 0);
    }
    CHECK(step == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("adam: two hand-computed scalar steps") {
    const double lr = 0.1, eps = 1e-8;
    Matrix p(1, 1, 1.0);
    AdamState state;

    Matrix g1(1, 1, 2.0);
    adam_step(p, g1, state, lr, 0.0, 1);
    // m=0.2, v=0.004, m_hat=2, v_hat=4 -> step = lr * 2/(2+eps)
    const double x1 = 1.0 - lr * (2.0 / (2.0 + eps));
    CHECK(p(0, 0) == doctest::Approx(x1).epsilon(1e-15));

    Matrix g2(1, 1, -1.0);
    adam_step(p, g2, state, lr, 0.0, 2);
    const double m2 = 0.9 * 0.2 + 0.1 * (-1.0);
    const double v2 = 0.999 * 0.004 + 0.001 * 1.0;
    const double m_hat = m2 / (1 - 0.9 * 0.9);
    const double v_hat = v2 / (1 - 0.999 * 0.999);
    const double x2 = x1 - lr * (m_hat / (std::sqrt(v_hat) + eps));
    CHECK(p(0, 0) == doctest::Approx(x2).epsilon(1e-15));

    // decoupled weight decay shrinks even with zero gradient
    Matrix q(1, 1, 1.0);
    AdamState qs;
    adam_step(q, Matrix(1, 1, 0.0), qs, 0.1, 0.5, 1);
    CHECK(q(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
}

TEST_CASE("end-to-end gradients on a 5-node 2-layer model match finite differences") {
    Rng rng(89);
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0},
                                                       {1, 3}};
    const Graph g = build_graph(edges, Matrix::uniform(5, 3, -1, 1, rng), {0, 1, 0, 1, 0});
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1};

    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 3;
    config.rank = 3;
    config.seed = 12;
    config.inner_activation = Activation::tanh;
    config.outer_activation = Activation::identity;  // smooth end to end
    config.sum_activation = Activation::identity;
    TgnnModel model = init_model(config, g.feature_dim(), g.num_classes);

    const auto samples = sample_all_neighbors(g, 5, 2);
    const ModelGradients analytic = model_loss_and_gradients(model, g, samples, mask);

    const auto loss_fn = [&] {
        return cross_entropy(forward_node(model, g, samples), g.labels, mask).loss;
    };

    double worst = 0.0;
    std::size_t param_index = 0;
    visit_params(model, [&](const std::string& name, Matrix& param) {
        const Matrix& grad = analytic.grads[param_index].second;
        REQUIRE(analytic.grads[param_index].first == name);
        for (std::size_t i = 0; i < param.a.size(); ++i) {
            const double saved = param.a[i];
            const double eps = 1e-6;
            param.a[i] = saved + eps;
            const double up = loss_fn();
            param.a[i] = saved - eps;
            const double down = loss_fn();
            param.a[i] = saved;
            worst = std::max(worst, floored_rel_error(grad.a[i], (up - down) / (2 * eps), 1e-3));
        }
        ++param_index;
    });
    CHECK(worst <= 1e-4);
}

TEST_CASE("train reaches full accuracy on the separable fixture") {
    Graph g = make_separable(60, 13);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 13);
    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 8;
    config.rank = 8;
    config.learning_rate = 0.01;
    config.epochs = 200;
    config.seed = 13;
    const TrainReport report = train(g, config);
    CHECK(report.final_train_acc == 1.0);
    CHECK(report.epochs.size() <= 200);
}

TEST_CASE("training loss is non-increasing over the first 10 epochs on the separable fixture") {
    Graph g = make_separable(60, 14);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 14);
    TgnnConfig config;
    config.num_layers = 1;
    config.hidden = 8;
    config.rank = 8;
    config.learning_rate = 5e-3;
    config.epochs = 10;
    config.seed = 14;
    const TrainReport report = train(g, config);
    REQUIRE(report.epochs.size() == 10);
    for (std::size_t e = 1; e < report.epochs.size(); ++e)
        CHECK(report.epochs[e].train_loss <= report.epochs[e - 1].train_loss);
}

TEST_CASE("parity fixture: multiplicative branch learns, sum-only arm cannot") {
    Graph g = make_parity(150, 3);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 3);

    TgnnConfig cp_config;
    cp_config.num_layers = 1;
    cp_config.hidden = 16;
    cp_config.rank = 16;
    cp_config.learning_rate = 0.02;
    cp_config.epochs = 400;
    cp_config.seed = 3;
    cp_config.patience = 400;
    const TrainReport cp_report = train(g, cp_config);
    CHECK(cp_report.final_train_acc >= 0.95);

    TgnnConfig sum_config = cp_config;
    sum_config.cp_branch = false;
    sum_config.sum_activation = Activation::identity;
    const TrainReport sum_report = train(g, sum_config);
    CHECK(sum_report.final_train_acc <= 0.70);
}

TEST_CASE("sum-only arm with identity activations is a linear-sum layer") {
    Rng rng(91);
    const Graph g = path3_graph(rng);
    TgnnConfig config;
    config.num_layers = 1;
    config.hidden = 2;
    config.rank = 3;
    config.cp_branch = false;
    config.sum_activation = Activation::identity;
    config.seed = 10;
    const TgnnModel model = init_model(config, g.feature_dim(), 2);

    const auto samples = sample_all_neighbors(g, 5, 0);
    const Matrix h = layer_apply(model.layers[0], g, g.features, samples);
    for (std::size_t v = 0; v < g.n; ++v) {
        Vector pooled(g.feature_dim(), 0.0);
        for (NodeId u : samples[v].members)
            for (std::size_t f = 0; f < pooled.size(); ++f) pooled[f] += g.features(u, f);
        const Vector expect = matvec_transposed(model.layers[0].w2, pooled);
        CHECK(testing::rel_deviation(expect, Vector(h.row(v).begin(), h.row(v).end())) <= 1e-12);
    }
}

TEST_CASE("diverging training aborts with the instability diagnostic") {
    Graph g = make_separable(30, 15);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 15);
    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 8;
    config.rank = 8;
    config.learning_rate = 1e12;
    config.inner_activation = Activation::identity;
    config.outer_activation = Activation::identity;
    config.sum_activation = Activation::identity;
    config.epochs = 60;
    config.seed = 15;
    try {
        train(g, config);
        FAIL("expected NanLossError");
    } catch (const NanLossError& e) {
        CHECK(e.max_factor > 0.0);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        CHECK(std::string(e.what()).find("Hadamard") != std::string::npos);
    }
}

TEST_CASE("train is deterministic given the seed") {
    Graph g = make_separable(40, 16);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 16);
    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 4;
    config.rank = 4;
    config.epochs = 20;
    config.seed = 16;
    config.dropout = 0.3;

    TgnnModel m1, m2;
    const TrainReport r1 = train(g, config, &m1);
    const TrainReport r2 = train(g, config, &m2);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
        CHECK(r1.epochs[e].train_loss == r2.epochs[e].train_loss);
        CHECK(r1.epochs[e].val_acc == r2.epochs[e].val_acc);
    }
    CHECK(r1.test_acc == r2.test_acc);

    bool identical = true;
    visit_params(m1, [&](const std::string& name, Matrix& p1) {
        visit_params(m2, [&](const std::string& name2, Matrix& p2) {
            if (name == name2)
                for (std::size_t i = 0; i < p1.a.size(); ++i)
                    identical = identical && p1.a[i] == p2.a[i];
        });
    });
    CHECK(identical);
}

TEST_CASE("checkpoint round trip preserves parameters bitwise") {
    Graph g = make_separable(30, 17);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 17);
    TgnnConfig config;
    config.num_layers = 2;
    config.hidden = 4;
    config.rank = 4;
    config.epochs = 5;
    config.seed = 17;
    TgnnModel model;
    train(g, config, &model);

    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "tgnn_ckpt_test.json";
    save_checkpoint(path.string(), model, config);
    const Checkpoint ck = load_checkpoint(path.string());
    fs::remove(path);

    const auto samples = sample_all_neighbors(g, 5, 17, kEvalEpoch);
    const Matrix a = forward_node(model, g, samples);
    const Matrix b = forward_node(ck.model, g, samples);
    for (std::size_t i = 0; i < a.a.size(); ++i) CHECK(a.a[i] == b.a[i]);
}

TEST_CASE("config json round trip") {
    TgnnConfig c;
    c.rank = 512;
    c.dropout = 0.9;
    c.learning_rate = 1e-3;
    c.weight_decay = 5e-5;
    c.seed = 42;
    c.sum_activation = Activation::identity;
    const TgnnConfig d = config_from_json(config_to_json(c));
    CHECK(d.rank == 512);
    CHECK(d.dropout == 0.9);
    CHECK(d.learning_rate == 1e-3);
    CHECK(d.weight_decay == 5e-5);
    CHECK(d.seed == 42);
    CHECK(d.sum_activation == Activation::identity);
    CHECK_THROWS(config_from_json("{\"dropout\": 1.5}"));
}

TEST_CASE("train validates its inputs") {
    Graph g = make_separable(20, 18);  // no masks
    TgnnConfig config;
    CHECK_THROWS_AS(train(g, config), std::invalid_argument);
    g.masks = random_split(g, {0.6, 0.2, 0.2}, 18);
    config.task = Task::graph_classification;
    CHECK_THROWS_AS(train(g, config), std::invalid_argument);
}
