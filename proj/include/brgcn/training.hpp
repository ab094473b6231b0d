#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "brgcn/autodiff.hpp"
#include "brgcn/decoders.hpp"
#include "brgcn/hetgraph.hpp"
#include "brgcn/layer.hpp"
#include "brgcn/rng.hpp"

namespace brgcn {

enum class Task { NodeClassification, LinkPrediction };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view s);

struct TrainConfig {
  Task task = Task::NodeClassification;
  LayerMode mode = LayerMode::Full;
  DecoderKind decoder = DecoderKind::DistMult;
  double lr = 0.01;
  double l2_penalty = 0.0;
  std::size_t epochs = 50;
  std::size_t hidden_units = 16;
  /// BR-GCN layers of the classifier (the last one outputs class scores).
  std::size_t nc_layers = 2;
  /// BR-GCN layers of the link-prediction encoder.
  std::size_t lp_layers = 1;
  /// Width of entity and relation embeddings in link prediction.
  std::size_t embedding_dim = 16;
  std::size_t num_bases = 0;
  double dropout = 0.0;
  double leaky_slope = 0.2;
  std::size_t omega = 1;
  double beta = 0.4;
  std::uint64_t seed = 0;
  bool add_inverse = true;
  bool add_self_loop = false;
  bool input_projection = false;
  /// Stop when the validation metric has not improved for `patience` epochs.
  bool early_stopping = false;
  std::size_t patience = 10;
};

/// One message per violated constraint, each starting with the key name.
std::vector<std::string> config_errors(const TrainConfig& config);
/// Throws ConfigError listing every violated constraint.
void validate(const TrainConfig& config);

using TripleSet = std::unordered_set<Triple, TripleHash>;

TripleSet make_triple_set(std::span<const Triple> triples);

// ------------------------------------------------------------------ losses

inline constexpr double kLogFloor = 1e-12;

/// Cross-entropy -Σ_{i ∈ ids} ln probs[i, label(i)] over row-stochastic
/// `probs` (N x K). Probabilities below 1e-12 are clamped; the number of
/// clamped entries is added to `*clamped` when given.
Var nc_loss(Var probs, const NodeLabels& labels, std::span<const NodeId> ids, std::size_t* clamped = nullptr);

/// c = -1 / ((1 + omega) |E'|).
double lp_normalizer(std::size_t e_prime_size, std::size_t omega);

/// c Σ [y log l(α) + (1 - y) log(1 - l(α))] with l the logistic sigmoid.
/// log(1 - l(α)) is evaluated as log l(-α). Logs are clamped at 1e-12.
Var lp_loss(Var scores, std::span<const int> y, std::size_t e_prime_size, std::size_t omega,
            std::size_t* clamped = nullptr);

// -------------------------------------------------------- negative sampling

/// Which slot a corruption replaced.
enum class CorruptedSlot { Head, Tail };

struct NegativeSample {
  Triple triple;
  CorruptedSlot slot;
};

/// `omega` corruptions of `positive`, each replacing the head or the tail
/// (fair coin) with a uniform entity and redrawn while it is a known positive.
/// Throws SamplingExhaustedError after 100 failed draws for one negative.
std::vector<NegativeSample> negative_sample(const Triple& positive, std::size_t num_entities, const TripleSet& known,
                                            std::size_t omega, Rng& rng);
std::vector<NegativeSample> negative_sample(const Triple& positive, const HeteroGraph& graph, std::size_t omega,
                                            Rng& rng);

inline constexpr std::size_t kMaxNegativeRetries = 100;

// -------------------------------------------------------------- optimiser

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over every parameter with requires_grad.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);
  /// Applies one update from the current gradients.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

/// Adds lambda * Σ_θ ||θ||² over all trainable parameters to `loss`.
Var add_l2_penalty(Tape& tape, Var loss, ParameterSet& params, double lambda);

struct OptimizeOptions {
  std::size_t epochs = 1;
  double lr = 0.01;
  double l2_penalty = 0.0;
  /// Called after each update with the epoch index and its loss. Returning
  /// false stops training.
  std::function<bool(std::size_t epoch, double loss)> after_epoch;
};

/// Builds the loss for one epoch on a fresh tape.
using EpochLoss = std::function<Var(Tape& tape, std::size_t epoch)>;

/// Full-batch Adam. Returns the per-epoch loss (including the l2 term).
/// Numeric failures are rethrown as TrainingError naming the epoch and the
/// first parameter whose value or gradient is not finite.
std::vector<double> optimize(ParameterSet& params, const EpochLoss& loss, const OptimizeOptions& options);

// ------------------------------------------------------ node classification

/// BR-GCN stack with one-hot node inputs and a row softmax on the output.
class NodeClassifier {
 public:
  NodeClassifier(const TrainConfig& config, std::size_t num_nodes, std::size_t num_relations, std::size_t num_classes);

  struct Output {
    Var probs;
    std::vector<AttentionTrace> traces;
  };
  Output forward(Tape& tape, const HeteroGraph& graph, bool training, Rng* rng, bool record_trace = true) const;
  /// Evaluation-mode probabilities and traces.
  Tensor predict(const HeteroGraph& graph, std::vector<AttentionTrace>* traces = nullptr) const;

  ParameterSet& params() { return *params_; }
  const ParameterSet& params() const { return *params_; }
  const BrgcnStack& stack() const { return stack_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  std::unique_ptr<ParameterSet> params_;
  BrgcnStack stack_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_metric = 0.0;
};

struct NcRun {
  std::unique_ptr<NodeClassifier> model;
  std::vector<EpochRecord> history;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::size_t clamped = 0;
};

/// Trains from scratch on `graph` (already augmented). Accuracies are
/// percentages; splits that are empty report 0.
NcRun train_node_classifier(const HeteroGraph& graph, const NodeLabels& labels, const NodeSplit& split,
                            const TrainConfig& config);

// ------------------------------------------------------------ link prediction

/// Entity embeddings from a BR-GCN encoder (or free embeddings when
/// `standalone`), scored by a decoder.
class LinkPredictor {
 public:
  LinkPredictor(const TrainConfig& config, std::size_t num_entities, std::size_t num_relations, bool standalone);

  Var entities(Tape& tape, const HeteroGraph& graph, bool training, Rng* rng) const;
  /// Evaluation-mode entity embeddings.
  Tensor entity_values(const HeteroGraph& graph) const;

  bool standalone() const { return standalone_; }
  const Decoder& decoder() const { return decoder_; }
  const BrgcnStack& encoder() const { return encoder_; }
  ParameterSet& params() { return *params_; }
  const ParameterSet& params() const { return *params_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  bool standalone_;
  std::unique_ptr<ParameterSet> params_;
  BrgcnStack encoder_;
  Parameter* free_entities_ = nullptr;
  Decoder decoder_;
};

struct LpRun {
  std::unique_ptr<LinkPredictor> model;
  std::vector<EpochRecord> history;
  std::size_t clamped = 0;
};

/// Builds the loss over positives followed by their negatives; `y` is 1 for
/// the first positives.size() rows.
Var link_prediction_loss(Tape& tape, const LinkPredictor& model, const HeteroGraph& graph,
                         std::span<const Triple> positives, std::span<const Triple> negatives, std::size_t omega,
                         bool training, Rng* rng, std::size_t* clamped = nullptr);

/// Trains on `train` triples over the encoder graph `graph` (built from the
/// training triples and augmented). Negatives are filtered against `train`.
/// `on_epoch` may supply a validation metric.
LpRun train_link_predictor(const HeteroGraph& graph, std::span<const Triple> train, const TrainConfig& config,
                           bool standalone,
                           const std::function<double(const LinkPredictor&, std::size_t epoch)>& val_metric = {});

// ------------------------------------------------------------------ output

/// Writes `epoch,loss,train_acc,val_metric` rows.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace brgcn
