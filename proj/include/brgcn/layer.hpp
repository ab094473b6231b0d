#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brgcn/autodiff.hpp"
#include "brgcn/hetgraph.hpp"

namespace brgcn {

class Rng;

/// Layer variants.
///
///   Full          node-level attention, then relation-level attention
///   NodeOnly      node-level attention; relations fused by a plain sum of
///                 their value projections with the self term added once
///   RelationOnly  uniform 1/|N_i^r| neighbour weights, relation-level attention
///   RgcnBaseline  uniform neighbour weights, plain sum (R-GCN style)
enum class LayerMode { Full, NodeOnly, RelationOnly, RgcnBaseline };

std::string_view to_string(LayerMode mode);
std::optional<LayerMode> parse_layer_mode(std::string_view s);

struct LayerConfig {
  std::size_t in_dim = 0;
  /// Output, attention and value dimension. They coincide because the value
  /// vectors and W_self h_i are added.
  std::size_t out_dim = 0;
  std::size_t num_relations = 0;
  /// 0 keeps one free matrix per relation for each projection.
  std::size_t num_bases = 0;
  double leaky_slope = 0.2;
  LayerMode mode = LayerMode::Full;
  /// Per-relation square projection applied to neighbour features before
  /// node-level attention and aggregation. Initialised to the identity.
  bool input_projection = false;
  /// ReLU inside each δ (plain sum for the uni-level variants). A classifier
  /// output layer switches it off and applies softmax instead.
  bool relu = true;
};

/// γ and ψ recorded for one node. `gamma[k]` holds the weights over
/// N_i^{relations[k]} (in sorted neighbour order); `psi` is the row-major
/// |R_i| x |R_i| relation attention, empty for modes without it.
struct NodeTrace {
  std::vector<RelId> relations;
  std::vector<std::vector<double>> gamma;
  std::vector<double> psi;

  std::size_t num_relations() const { return relations.size(); }
  double psi_at(std::size_t row, std::size_t col) const { return psi[row * relations.size() + col]; }
};

/// One entry per graph node.
struct AttentionTrace {
  std::vector<NodeTrace> nodes;
};

struct ForwardOptions {
  bool training = false;
  /// Inverted dropout on input features and on γ, active only when training.
  double dropout = 0.0;
  Rng* rng = nullptr;
  bool record_trace = true;
};

struct NodeAttentionResult {
  Var gamma;  // |N_i^r|
  Var z;      // in_dim
};

struct RelationAttentionResult {
  Var psi;     // |R_i| x |R_i|; invalid for plain-sum modes
  Var h_next;  // out_dim
};

struct LayerOutput {
  Var h;  // num_nodes x out_dim
  AttentionTrace trace;
};

/// Projection roles that may be basis-decomposed.
enum class Projection { Query, Key, Value };

/// One bi-level attention layer. Parameters live in the ParameterSet passed
/// at construction, under names starting with `prefix`.
class BrgcnLayer {
 public:
  BrgcnLayer(std::string prefix, LayerConfig config, ParameterSet& params, Rng& init_rng);

  const LayerConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  bool uses_node_attention() const;
  bool uses_relation_attention() const;

  /// γ over N_i^r and z_i^r = Σ_j γ_j h_j. Throws PreconditionError when
  /// N_i^r is empty.
  NodeAttentionResult node_attention(Tape& tape, Var h, const HeteroGraph& graph, NodeId i, RelId r) const;

  /// Fuses the relation-specific embeddings `z` (one per entry of `rels`)
  /// with the self term W_self h_i.
  RelationAttentionResult relation_attention(Tape& tape, std::span<const RelId> rels, std::span<const Var> z,
                                             Var h_i) const;

  /// h (num_nodes x in_dim) -> num_nodes x out_dim. Nodes with R_i empty emit
  /// the zero vector.
  LayerOutput forward(Tape& tape, Var h, const HeteroGraph& graph, const ForwardOptions& options = {}) const;

  /// Current value of the projection matrix for relation r, reconstructed
  /// from the basis when decomposition is on.
  Tensor materialized(Projection role, RelId r) const;

  Parameter& attention_vector(RelId r) const;
  Parameter& self_weight() const { return *self_; }
  /// Free per-relation matrix; only valid without basis decomposition.
  Parameter& projection(Projection role, RelId r) const;
  Parameter& basis(Projection role) const;
  Parameter& coefficients(Projection role) const;

  /// Per-tape parameter bindings; internal to the forward pass.
  class Bound;

 private:
  struct Bank {
    bool enabled = false;
    std::vector<Parameter*> per_relation;
    Parameter* basis = nullptr;   // num_bases x (out_dim * in_dim)
    Parameter* coeffs = nullptr;  // num_relations x num_bases
  };
  const Bank& bank(Projection role) const;

  std::string prefix_;
  LayerConfig config_;
  std::vector<Parameter*> attn_;
  std::vector<Parameter*> input_proj_;
  Bank query_, key_, value_;
  Parameter* self_ = nullptr;
};

/// Constant identity matrix: the one-hot-per-node input used when no
/// features are provided.
Var one_hot_features(Tape& tape, std::size_t num_nodes);

struct StackOutput {
  Var h;
  std::vector<AttentionTrace> traces;
};

/// L layers applied in sequence; layer k's output feeds layer k + 1.
class BrgcnStack {
 public:
  BrgcnStack() = default;
  /// `dims` = {d_0, d_1, ..., d_L}; `base` supplies the shared settings and
  /// its in/out dims are ignored. `linear_output` drops the ReLU of the last
  /// layer.
  BrgcnStack(const std::string& prefix, const std::vector<std::size_t>& dims, const LayerConfig& base,
             ParameterSet& params, Rng& init_rng, bool linear_output = false);
  /// Throws ConfigError when adjacent dimensions do not chain.
  explicit BrgcnStack(std::vector<BrgcnLayer> layers);

  const std::vector<BrgcnLayer>& layers() const { return layers_; }
  std::size_t in_dim() const;
  std::size_t out_dim() const;

  StackOutput forward(Tape& tape, Var x0, const HeteroGraph& graph, const ForwardOptions& options = {}) const;

 private:
  std::vector<BrgcnLayer> layers_;
};

}  // namespace brgcn
