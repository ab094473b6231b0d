#include "brgcn/layer.hpp"

#include <cmath>

#include "brgcn/errors.hpp"
#include "brgcn/rng.hpp"

namespace brgcn {
namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

const char* role_name(Projection role) {
  switch (role) {
    case Projection::Query: return "query";
    case Projection::Key: return "key";
    case Projection::Value: return "value";
  }
  return "?";
}

Var dropout_mask(Tape& tape, Var x, double p, Rng& rng) {
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep;
  return ad::mul(x, tape.constant(std::move(mask)));
}

}  // namespace

std::string_view to_string(LayerMode mode) {
  switch (mode) {
    case LayerMode::Full: return "full";
    case LayerMode::NodeOnly: return "node_only";
    case LayerMode::RelationOnly: return "relation_only";
    case LayerMode::RgcnBaseline: return "rgcn_baseline";
  }
  return "?";
}

std::optional<LayerMode> parse_layer_mode(std::string_view s) {
  if (s == "full") return LayerMode::Full;
  if (s == "node_only") return LayerMode::NodeOnly;
  if (s == "relation_only") return LayerMode::RelationOnly;
  if (s == "rgcn_baseline") return LayerMode::RgcnBaseline;
  return std::nullopt;
}

// Per-tape view of the layer's parameters. Materialised matrices are recorded
// once per relation and reused for every node.
class BrgcnLayer::Bound {
 public:
  Bound(const BrgcnLayer& layer, Tape& tape) : layer_(layer), tape_(tape) {
    const std::size_t R = layer.config_.num_relations;
    left_.resize(R);
    right_.resize(R);
    proj_.resize(R);
    for (auto& w : weights_) w.resize(R);
  }

  Var attn_left(RelId r) {
    fill_attention(r);
    return left_[r];
  }
  Var attn_right(RelId r) {
    fill_attention(r);
    return right_[r];
  }

  Var weight(Projection role, RelId r) {
    Var& w = weights_[static_cast<int>(role)][r];
    if (w.valid()) return w;
    const Bank& bank = layer_.bank(role);
    if (!bank.enabled) {
      w = tape_.param(*bank.per_relation[r]);
    } else {
      Var coeff = ad::take_row(tape_.param(*bank.coeffs), r);
      Var flat = ad::matmul(coeff, tape_.param(*bank.basis));
      w = ad::reshape(flat, {layer_.config_.out_dim, layer_.config_.in_dim});
    }
    return w;
  }

  Var self() {
    if (!self_.valid()) self_ = tape_.param(*layer_.self_);
    return self_;
  }

  Var input_projection(RelId r) {
    if (!proj_[r].valid()) proj_[r] = tape_.param(*layer_.input_proj_[r]);
    return proj_[r];
  }

  Tape& tape() { return tape_; }

 private:
  void fill_attention(RelId r) {
    if (left_[r].valid()) return;
    const std::size_t d = layer_.config_.in_dim;
    Var a = tape_.param(*layer_.attn_[r]);
    std::vector<std::size_t> lo(d), hi(d);
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = k;
      hi[k] = d + k;
    }
    left_[r] = ad::index_select(a, 0, std::move(lo));
    right_[r] = ad::index_select(a, 0, std::move(hi));
  }

  const BrgcnLayer& layer_;
  Tape& tape_;
  std::vector<Var> left_, right_, proj_;
  std::vector<Var> weights_[3];
  Var self_;
};

BrgcnLayer::BrgcnLayer(std::string prefix, LayerConfig config, ParameterSet& params, Rng& init_rng)
    : prefix_(std::move(prefix)), config_(config) {
  if (config_.in_dim == 0 || config_.out_dim == 0) {
    throw ConfigError("layer " + prefix_ + ": dimensions must be positive");
  }
  if (!(config_.leaky_slope >= 0.0) || !std::isfinite(config_.leaky_slope)) {
    throw ConfigError("layer " + prefix_ + ": leaky_slope must be a finite non-negative number");
  }
  const std::size_t R = config_.num_relations;
  const std::size_t din = config_.in_dim, dout = config_.out_dim;

  if (uses_node_attention()) {
    for (RelId r = 0; r < R; ++r) {
      attn_.push_back(&params.add(prefix_ + ".attn." + std::to_string(r), glorot({2 * din}, 2 * din, 1, init_rng)));
    }
  }
  if (config_.input_projection) {
    for (RelId r = 0; r < R; ++r) {
      input_proj_.push_back(&params.add(prefix_ + ".proj." + std::to_string(r), Tensor::identity(din)));
    }
  }

  auto make_bank = [&](Bank& bank, Projection role) {
    const std::string base = prefix_ + "." + role_name(role);
    if (config_.num_bases > 0) {
      bank.enabled = true;
      const std::size_t B = config_.num_bases;
      Tensor basis({B, dout * din});
      for (std::size_t b = 0; b < B; ++b) {
        Tensor vb = glorot({dout * din}, din, dout, init_rng);
        std::copy(vb.data().begin(), vb.data().end(), basis.row(b).begin());
      }
      bank.basis = &params.add(base + ".basis", std::move(basis));
      bank.coeffs = &params.add(base + ".coeff", glorot({R, B}, B, 1, init_rng));
    } else {
      for (RelId r = 0; r < R; ++r) {
        bank.per_relation.push_back(&params.add(base + "." + std::to_string(r), glorot({dout, din}, din, dout, init_rng)));
      }
    }
  };
  if (uses_relation_attention()) {
    make_bank(query_, Projection::Query);
    make_bank(key_, Projection::Key);
  }
  make_bank(value_, Projection::Value);
  self_ = &params.add(prefix_ + ".self", glorot({dout, din}, din, dout, init_rng));
}

bool BrgcnLayer::uses_node_attention() const {
  return config_.mode == LayerMode::Full || config_.mode == LayerMode::NodeOnly;
}

bool BrgcnLayer::uses_relation_attention() const {
  return config_.mode == LayerMode::Full || config_.mode == LayerMode::RelationOnly;
}

const BrgcnLayer::Bank& BrgcnLayer::bank(Projection role) const {
  switch (role) {
    case Projection::Query: return query_;
    case Projection::Key: return key_;
    case Projection::Value: return value_;
  }
  return value_;
}

Parameter& BrgcnLayer::attention_vector(RelId r) const {
  if (r >= attn_.size()) throw BoundsError("layer " + prefix_ + " has no attention vector for relation " + std::to_string(r));
  return *attn_[r];
}

Parameter& BrgcnLayer::projection(Projection role, RelId r) const {
  const Bank& b = bank(role);
  if (r >= b.per_relation.size()) {
    throw BoundsError("layer " + prefix_ + " has no free " + role_name(role) + " matrix for relation " + std::to_string(r));
  }
  return *b.per_relation[r];
}

Parameter& BrgcnLayer::basis(Projection role) const {
  const Bank& b = bank(role);
  if (!b.basis) throw PreconditionError(std::string("basis decomposition is off for ") + role_name(role));
  return *b.basis;
}

Parameter& BrgcnLayer::coefficients(Projection role) const {
  const Bank& b = bank(role);
  if (!b.coeffs) throw PreconditionError(std::string("basis decomposition is off for ") + role_name(role));
  return *b.coeffs;
}

Tensor BrgcnLayer::materialized(Projection role, RelId r) const {
  const Bank& b = bank(role);
  if (r >= config_.num_relations) throw BoundsError("relation " + std::to_string(r) + " out of range");
  if (!b.enabled) return projection(role, r).value;
  const std::size_t B = config_.num_bases, D = config_.out_dim * config_.in_dim;
  Tensor w({config_.out_dim, config_.in_dim});
  for (std::size_t k = 0; k < B; ++k) {
    const double c = b.coeffs->value.at(r, k);
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < D; ++j) w[j] += c * b.basis->value[k * D + j];
  }
  return w;
}

namespace {

struct NodeStep {
  Var gamma;
  Var gamma_used;
  Var z;
};

NodeStep node_step(BrgcnLayer::Bound& bound, const LayerConfig& cfg, bool attend, Var h, Var h_i,
                          std::span<const NodeId> nbrs, RelId r, const ForwardOptions& opt) {
  Tape& tape = bound.tape();
  const std::size_t n = nbrs.size();
  Var hn = ad::index_select(h, 0, std::vector<std::size_t>(nbrs.begin(), nbrs.end()));
  if (cfg.input_projection) {
    Var p = bound.input_projection(r);
    hn = ad::matmul(hn, ad::transpose(p));
    h_i = ad::matmul(p, h_i);
  }
  NodeStep s;
  if (attend) {
    // a_r^T [h_i || h_j] split into the h_i half and the h_j half.
    Var logits = ad::add(ad::matmul(hn, bound.attn_right(r)), ad::dot(bound.attn_left(r), h_i));
    s.gamma = ad::softmax(ad::leaky_relu(logits, cfg.leaky_slope));
  } else {
    s.gamma = tape.constant(Tensor(Shape{n}, 1.0 / static_cast<double>(n)));
  }
  s.gamma_used = s.gamma;
  if (opt.training && opt.dropout > 0.0) s.gamma_used = dropout_mask(tape, s.gamma, opt.dropout, *opt.rng);
  s.z = ad::matmul(s.gamma_used, hn);
  return s;
}

RelationAttentionResult fuse(BrgcnLayer::Bound& bound, bool attend, bool relu, std::span<const RelId> rels, std::span<const Var> z,
                             Var h_i) {
  Var self_term = ad::matmul(bound.self(), h_i);
  RelationAttentionResult out;
  if (!attend) {
    Var acc = self_term;
    for (std::size_t k = 0; k < rels.size(); ++k) acc = ad::add(acc, ad::matmul(bound.weight(Projection::Value, rels[k]), z[k]));
    out.h_next = relu ? ad::relu(acc) : acc;
    return out;
  }
  std::vector<Var> q, k, v;
  q.reserve(rels.size());
  k.reserve(rels.size());
  v.reserve(rels.size());
  for (std::size_t m = 0; m < rels.size(); ++m) {
    q.push_back(ad::matmul(bound.weight(Projection::Query, rels[m]), z[m]));
    k.push_back(ad::matmul(bound.weight(Projection::Key, rels[m]), z[m]));
    v.push_back(ad::matmul(bound.weight(Projection::Value, rels[m]), z[m]));
  }
  Var Q = ad::stack(q), K = ad::stack(k), V = ad::stack(v);
  out.psi = ad::softmax(ad::matmul(Q, ad::transpose(K)));
  // Each row r of delta is ReLU(sum_r' psi[r, r'] v_r' + W_self h_i).
  Var delta = ad::add(ad::matmul(out.psi, V), self_term);
  if (relu) delta = ad::relu(delta);
  out.h_next = ad::sum(delta, 0);
  return out;
}

}  // namespace

NodeAttentionResult BrgcnLayer::node_attention(Tape& tape, Var h, const HeteroGraph& graph, NodeId i, RelId r) const {
  if (r >= config_.num_relations) throw BoundsError("relation " + std::to_string(r) + " out of range for layer");
  const auto nbrs = graph.neighbors(i, r);
  if (nbrs.empty()) {
    throw PreconditionError("node_attention: node " + std::to_string(i) + " has no neighbours under relation " +
                            std::to_string(r));
  }
  Bound bound(*this, tape);
  NodeStep s = node_step(bound, config_, uses_node_attention(), h, ad::take_row(h, i), nbrs, r, {});
  return {s.gamma, s.z};
}


RelationAttentionResult BrgcnLayer::relation_attention(Tape& tape, std::span<const RelId> rels, std::span<const Var> z,
                                                       Var h_i) const {
  if (rels.empty()) throw PreconditionError("relation_attention: no relations given");
  if (rels.size() != z.size()) throw DimensionError("relation_attention: one embedding per relation required");
  for (RelId r : rels)
    if (r >= config_.num_relations) throw BoundsError("relation " + std::to_string(r) + " out of range for layer");
  Bound bound(*this, tape);
  return fuse(bound, uses_relation_attention(), config_.relu, rels, z, h_i);
}

LayerOutput BrgcnLayer::forward(Tape& tape, Var h, const HeteroGraph& graph, const ForwardOptions& options) const {
  const Tensor& hv = h.value();
  const std::size_t N = graph.num_nodes();
  if (hv.rank() != 2 || hv.rows() != N || hv.cols() != config_.in_dim) {
    throw DimensionError("layer " + prefix_ + ": expected features of shape " + shape_str({N, config_.in_dim}) +
                         ", got " + shape_str(hv.shape()));
  }
  if (graph.num_relations() > config_.num_relations) {
    throw ConfigError("layer " + prefix_ + " was built for " + std::to_string(config_.num_relations) +
                      " relations but the graph has " + std::to_string(graph.num_relations()));
  }
  const bool drop = options.training && options.dropout > 0.0;
  if (drop && !options.rng) throw PreconditionError("dropout during training needs an rng");

  Bound bound(*this, tape);
  Var x = drop ? dropout_mask(tape, h, options.dropout, *options.rng) : h;

  LayerOutput out;
  if (options.record_trace) out.trace.nodes.resize(N);
  std::vector<Var> rows(N);
  Var zero;
  std::vector<Var> z;
  for (NodeId i = 0; i < N; ++i) {
    const auto rels = graph.relations_of(i);
    if (rels.empty()) {
      if (!zero.valid()) zero = tape.constant(Tensor(Shape{config_.out_dim}));
      rows[i] = zero;
      continue;
    }
    Var h_i = ad::take_row(x, i);
    z.clear();
    NodeTrace* trace = options.record_trace ? &out.trace.nodes[i] : nullptr;
    for (RelId r : rels) {
      NodeStep s = node_step(bound, config_, uses_node_attention(), x, h_i, graph.neighbors(i, r), r, options);
      z.push_back(s.z);
      if (trace) {
        trace->relations.push_back(r);
        trace->gamma.push_back(s.gamma.value().values());
      }
    }
    RelationAttentionResult fused = fuse(bound, uses_relation_attention(), config_.relu, rels, z, h_i);
    if (trace && fused.psi.valid()) trace->psi = fused.psi.value().values();
    rows[i] = fused.h_next;
  }
  out.h = ad::stack(rows);
  return out;
}

Var one_hot_features(Tape& tape, std::size_t num_nodes) { return tape.constant(Tensor::identity(num_nodes)); }

BrgcnStack::BrgcnStack(const std::string& prefix, const std::vector<std::size_t>& dims, const LayerConfig& base,
                       ParameterSet& params, Rng& init_rng, bool linear_output) {
  if (dims.size() < 2) throw ConfigError("a layer stack needs at least an input and an output dimension");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerConfig cfg = base;
    cfg.in_dim = dims[l];
    cfg.out_dim = dims[l + 1];
    if (linear_output && l + 2 == dims.size()) cfg.relu = false;
    layers_.emplace_back(prefix + "." + std::to_string(l), cfg, params, init_rng);
  }
}

BrgcnStack::BrgcnStack(std::vector<BrgcnLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("a layer stack needs at least one layer");
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    if (layers_[l].config().out_dim != layers_[l + 1].config().in_dim) {
      throw ConfigError("layer " + std::to_string(l) + " outputs " + std::to_string(layers_[l].config().out_dim) +
                        " features but layer " + std::to_string(l + 1) + " expects " +
                        std::to_string(layers_[l + 1].config().in_dim));
    }
  }
}

std::size_t BrgcnStack::in_dim() const { return layers_.empty() ? 0 : layers_.front().config().in_dim; }
std::size_t BrgcnStack::out_dim() const { return layers_.empty() ? 0 : layers_.back().config().out_dim; }

StackOutput BrgcnStack::forward(Tape& tape, Var x0, const HeteroGraph& graph, const ForwardOptions& options) const {
  if (layers_.empty()) throw ConfigError("empty layer stack");
  StackOutput out;
  Var h = x0;
  for (const auto& layer : layers_) {
    LayerOutput lo = layer.forward(tape, h, graph, options);
    h = lo.h;
    out.traces.push_back(std::move(lo.trace));
  }
  out.h = h;
  return out;
}

}  // namespace brgcn
