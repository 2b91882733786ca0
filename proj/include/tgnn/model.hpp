#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgnn/cp_layer.hpp"
#include "tgnn/graph.hpp"

namespace tgnn {

enum class Task { node_classification, graph_classification };

struct TgnnConfig {
    std::size_t num_layers = 2;
    std::size_t hidden = 32;
    std::size_t rank = 64;
    bool cp_branch = true;   // false = "linear sum pooling" ablation arm
    bool sum_branch = true;  // false = pure CP pooling arm
    double dropout = 0.0;
    std::size_t sample_size = 5;
    double learning_rate = 1e-3;
    double weight_decay = 5e-5;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    Task task = Task::node_classification;
    std::size_t patience = 100;   // early stopping on validation accuracy
    bool freeze_samples = false;  // keep epoch-0 neighborhoods for all epochs
    Activation inner_activation = Activation::tanh;
    Activation outer_activation = Activation::relu;
    Activation sum_activation = Activation::relu;
    bool readout = false;  // CP readout head for graph-level outputs

    void validate() const;
};

struct TgnnModel {
    std::vector<CpSumLayerParams> layers;  // empty w2 = no sum branch
    Matrix head_w;                         // hidden x C
    Matrix head_b;                         // 1 x C
    std::optional<CpLayerParams> readout_layer;
    bool train_cp = true;  // false freezes the (zeroed) CP branch

    std::size_t num_classes() const { return head_w.cols; }
};

TgnnModel init_model(const TgnnConfig& config, std::size_t feature_dim, std::size_t num_classes);

/// Enumerate trainable parameter matrices in a fixed order.
void visit_params(TgnnModel& model,
                  const std::function<void(const std::string&, Matrix&)>& fn);

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// One aggregation layer over every node: row v of the result is the layer
/// applied to the embeddings of v's sampled neighborhood members. An optional
/// dropout mask (same shape as `embeddings`, entries 0 or 1/(1-p)) is applied
/// to the inputs first.
Matrix layer_apply(const CpSumLayerParams& layer, const Graph& g, const Matrix& embeddings,
                   std::span<const SampledNeighborhood> samples,
                   const Matrix* dropout_mask = nullptr, ForwardStats* stats = nullptr);

/// Deterministic evaluation-mode logits (no dropout): stacked layers plus the
/// linear head.
Matrix forward_node(const TgnnModel& model, const Graph& g,
                    std::span<const SampledNeighborhood> samples);

/// Graph-level logits: node embeddings, CP readout over all of them
/// (variadic k = n), then the head. Requires a readout layer.
Vector forward_graph(const TgnnModel& model, const Graph& g,
                     std::span<const SampledNeighborhood> samples);

// ---------------------------------------------------------------------------
// Loss / optimizer
// ---------------------------------------------------------------------------

struct LossResult {
    double loss = 0.0;
    Matrix d_logits;
};

/// Mean negative log-softmax over masked nodes, with its gradient.
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels,
                         std::span<const std::uint8_t> mask);

double accuracy(const Matrix& logits, std::span<const int> labels,
                std::span<const std::uint8_t> mask);

struct AdamState {
    Vector m;
    Vector v;
};

/// Bias-corrected Adam with decoupled weight decay; t is the 1-based step.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr,
               double weight_decay, std::size_t t, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Thrown when the training loss turns non-finite; carries the paper-flagged
/// instability signal (largest Hadamard factor magnitude seen that epoch).
class NanLossError : public std::runtime_error {
public:
    NanLossError(std::size_t epoch, double max_factor);
    std::size_t epoch;
    double max_factor;
};

struct EpochRecord {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_val_epoch = 0;
    double best_val_acc = 0.0;
    double test_acc = 0.0;  // at the best-validation epoch
    double final_train_acc = 0.0;
    double wall_time_seconds = 0.0;
    std::uint64_t seed = 0;
    bool early_stopped = false;

    std::string to_json() const;
};

/// Full training loop: per epoch resample neighborhoods, forward with
/// dropout, cross-entropy on the train mask, backward, Adam step; tracks the
/// best validation accuracy and reports test accuracy at that epoch.
/// Fully deterministic given (graph, config).
TrainReport train(const Graph& g, const TgnnConfig& config, TgnnModel* out_model = nullptr);

/// Gradients for every trainable parameter plus the loss, computed in one
/// forward/backward pass (no dropout). Used by the finite-difference checks.
struct ModelGradients {
    double loss = 0.0;
    std::vector<std::pair<std::string, Matrix>> grads;
};
ModelGradients model_loss_and_gradients(TgnnModel& model, const Graph& g,
                                        std::span<const SampledNeighborhood> samples,
                                        std::span<const std::uint8_t> mask);

// ---------------------------------------------------------------------------
// Checkpoints / config serialization
// ---------------------------------------------------------------------------

std::string config_to_json(const TgnnConfig& c);
TgnnConfig config_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const TgnnModel& model, const TgnnConfig& config);
struct Checkpoint {
    TgnnModel model;
    TgnnConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

/// Reserved epoch key for evaluation-time neighborhoods (drawn once so that
/// repeated evaluations are bitwise identical).
inline constexpr std::uint64_t kEvalEpoch = ~std::uint64_t{0};

}  // namespace tgnn
