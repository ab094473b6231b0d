#include "brgcn/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "brgcn/errors.hpp"

namespace brgcn {
namespace {

constexpr std::uint64_t kStreamOffset = 0x9E3779B97F4A7C15ull;

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double accuracy_on(const Tensor& probs, const NodeLabels& labels, std::span<const NodeId> ids) {
  if (ids.empty()) return 0.0;
  std::size_t correct = 0;
  for (NodeId i : ids) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    if (best == labels.label(i)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ids.size());
}

std::string first_bad_parameter(const ParameterSet& params) {
  for (const auto& p : params) {
    if (!p->value.all_finite()) return p->name;
    if (p->grad.size() == p->value.size() && !p->grad.all_finite()) return p->name;
  }
  return "<loss>";
}

std::vector<Tensor> snapshot(const ParameterSet& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p->value);
  return out;
}

void restore(ParameterSet& params, const std::vector<Tensor>& values) {
  std::size_t k = 0;
  for (auto& p : params) p->value = values[k++];
}

}  // namespace

std::string_view to_string(Task task) {
  return task == Task::NodeClassification ? "node_classification" : "link_prediction";
}

std::optional<Task> parse_task(std::string_view s) {
  if (s == "node_classification" || s == "nc") return Task::NodeClassification;
  if (s == "link_prediction" || s == "lp") return Task::LinkPrediction;
  return std::nullopt;
}

std::vector<std::string> config_errors(const TrainConfig& c) {
  std::vector<std::string> errors;
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) errors.push_back("lr must be > 0");
  if (!(c.l2_penalty >= 0.0) || !std::isfinite(c.l2_penalty)) errors.push_back("l2_penalty must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) errors.push_back("dropout must lie in [0, 1)");
  if (!(c.leaky_slope >= 0.0) || !std::isfinite(c.leaky_slope)) errors.push_back("leaky_slope must be >= 0");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) errors.push_back("beta must lie in [0, 1]");
  if (c.hidden_units == 0) errors.push_back("hidden_units must be >= 1");
  if (c.embedding_dim == 0) errors.push_back("embedding_dim must be >= 1");
  if (c.decoder == DecoderKind::ComplEx && c.embedding_dim % 2 != 0) errors.push_back("embedding_dim must be even for complex");
  if (c.nc_layers == 0) errors.push_back("nc_layers must be >= 1");
  if (c.lp_layers == 0) errors.push_back("lp_layers must be >= 1");
  if (c.task == Task::LinkPrediction && c.omega < 1) errors.push_back("omega must be >= 1");
  if (c.early_stopping && c.patience == 0) errors.push_back("patience must be >= 1");
  return errors;
}

void validate(const TrainConfig& c) {
  const auto errors = config_errors(c);
  if (!errors.empty()) {
    std::string msg = "invalid training configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

TripleSet make_triple_set(std::span<const Triple> triples) { return TripleSet(triples.begin(), triples.end()); }

// ------------------------------------------------------------------ losses

Var nc_loss(Var probs, const NodeLabels& labels, std::span<const NodeId> ids, std::size_t* clamped) {
  const Tensor& p = probs.value();
  if (p.rank() != 2) throw DimensionError("nc_loss: expected an N x K matrix");
  const std::size_t K = p.cols();
  if (ids.empty()) return probs.tape().constant(Tensor::scalar(0.0));
  std::vector<std::size_t> idx;
  idx.reserve(ids.size());
  for (NodeId i : ids) {
    if (i >= p.rows()) throw BoundsError("nc_loss: node " + std::to_string(i) + " out of range");
    const std::size_t y = labels.label(i);
    if (y >= K) throw BoundsError("nc_loss: label " + std::to_string(y) + " out of range");
    idx.push_back(i * K + y);
  }
  Var picked = ad::index_select(ad::reshape(probs, {p.size()}), 0, std::move(idx));
  return ad::neg(ad::sum(ad::log_clamped(picked, kLogFloor, clamped)));
}

double lp_normalizer(std::size_t e_prime_size, std::size_t omega) {
  if (e_prime_size == 0) throw PreconditionError("lp_normalizer: |E'| must be positive");
  return -1.0 / (static_cast<double>(1 + omega) * static_cast<double>(e_prime_size));
}

Var lp_loss(Var scores, std::span<const int> y, std::size_t e_prime_size, std::size_t omega, std::size_t* clamped) {
  const Tensor& s = scores.value();
  if (s.rank() != 1 || s.size() != y.size()) throw DimensionError("lp_loss: one label per score required");
  // y log l(α) + (1 - y) log l(-α) = log l(±α), sign +1 for positives.
  Tensor sign(Shape{y.size()});
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] != 0 && y[k] != 1) throw PreconditionError("lp_loss: labels must be 0 or 1");
    sign[k] = y[k] ? 1.0 : -1.0;
  }
  Var signed_scores = ad::mul(scores, scores.tape().constant(std::move(sign)));
  Var logs = ad::log_clamped(ad::sigmoid(signed_scores), kLogFloor, clamped);
  return ad::scale(ad::sum(logs), lp_normalizer(e_prime_size, omega));
}

// -------------------------------------------------------- negative sampling

std::vector<NegativeSample> negative_sample(const Triple& positive, std::size_t num_entities, const TripleSet& known,
                                            std::size_t omega, Rng& rng) {
  if (num_entities == 0) throw EmptyGraphError("negative_sample: graph has no entities");
  std::vector<NegativeSample> out;
  out.reserve(omega);
  for (std::size_t n = 0; n < omega; ++n) {
    bool found = false;
    for (std::size_t attempt = 0; attempt < kMaxNegativeRetries; ++attempt) {
      NegativeSample s{positive, rng.coin() ? CorruptedSlot::Head : CorruptedSlot::Tail};
      const NodeId e = rng.below(num_entities);
      if (s.slot == CorruptedSlot::Head) s.triple.head = e;
      else s.triple.tail = e;
      if (known.count(s.triple)) continue;
      out.push_back(s);
      found = true;
      break;
    }
    if (!found) {
      throw SamplingExhaustedError("no negative found for (" + std::to_string(positive.head) + ", " +
                                   std::to_string(positive.rel) + ", " + std::to_string(positive.tail) + ") after " +
                                   std::to_string(kMaxNegativeRetries) + " draws");
    }
  }
  return out;
}

std::vector<NegativeSample> negative_sample(const Triple& positive, const HeteroGraph& graph, std::size_t omega,
                                            Rng& rng) {
  const TripleSet known = make_triple_set(graph.triples());
  return negative_sample(positive, graph.num_nodes(), known, omega, rng);
}

// -------------------------------------------------------------- optimiser

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params_) {
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    if (!p->requires_grad || p->grad.size() != p->value.size()) continue;
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double g = p->grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p->value[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

Var add_l2_penalty(Tape& tape, Var loss, ParameterSet& params, double lambda) {
  if (lambda == 0.0) return loss;
  Var total = loss;
  for (auto& p : params) {
    if (!p->requires_grad) continue;
    Var x = tape.param(*p);
    total = ad::add(total, ad::scale(ad::sum(ad::mul(x, x)), lambda));
  }
  return total;
}

std::vector<double> optimize(ParameterSet& params, const EpochLoss& loss, const OptimizeOptions& options) {
  Adam adam(params, AdamConfig{options.lr});
  std::vector<double> curve;
  curve.reserve(options.epochs);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    params.zero_grad();
    double value = 0.0;
    try {
      Tape tape;
      Var total = add_l2_penalty(tape, loss(tape, epoch), params, options.l2_penalty);
      value = total.value().item();
      tape.backward(total);
    } catch (const NumericError& e) {
      throw TrainingError(epoch, first_bad_parameter(params), e.what());
    }
    for (const auto& p : params) {
      if (p->grad.size() == p->value.size() && !p->grad.all_finite()) {
        throw TrainingError(epoch, p->name, "non-finite gradient");
      }
    }
    adam.step();
    for (const auto& p : params) {
      if (!p->value.all_finite()) throw TrainingError(epoch, p->name, "non-finite parameter after update");
    }
    curve.push_back(value);
    bool keep_going = true;
    try {
      if (options.after_epoch) keep_going = options.after_epoch(epoch, value);
    } catch (const NumericError& e) {
      throw TrainingError(epoch, first_bad_parameter(params), std::string("evaluation: ") + e.what());
    }
    if (!keep_going) break;
  }
  return curve;
}

// ------------------------------------------------------ node classification

NodeClassifier::NodeClassifier(const TrainConfig& config, std::size_t num_nodes, std::size_t num_relations,
                               std::size_t num_classes)
    : config_(config), params_(std::make_unique<ParameterSet>()) {
  if (num_classes == 0) throw ConfigError("node classification needs at least one class");
  std::vector<std::size_t> dims{num_nodes};
  for (std::size_t l = 0; l + 1 < config.nc_layers; ++l) dims.push_back(config.hidden_units);
  dims.push_back(num_classes);
  LayerConfig base;
  base.num_relations = num_relations;
  base.num_bases = config.num_bases;
  base.leaky_slope = config.leaky_slope;
  base.mode = config.mode;
  base.input_projection = config.input_projection;
  Rng init(config.seed);
  stack_ = BrgcnStack("layer", dims, base, *params_, init, true);
}

NodeClassifier::Output NodeClassifier::forward(Tape& tape, const HeteroGraph& graph, bool training, Rng* rng,
                                               bool record_trace) const {
  ForwardOptions opt;
  opt.training = training;
  opt.dropout = config_.dropout;
  opt.rng = rng;
  opt.record_trace = record_trace;
  StackOutput s = stack_.forward(tape, one_hot_features(tape, graph.num_nodes()), graph, opt);
  return {ad::softmax(s.h), std::move(s.traces)};
}

Tensor NodeClassifier::predict(const HeteroGraph& graph, std::vector<AttentionTrace>* traces) const {
  Tape tape;
  Output out = forward(tape, graph, false, nullptr, traces != nullptr);
  if (traces) *traces = std::move(out.traces);
  return out.probs.value();
}

NcRun train_node_classifier(const HeteroGraph& graph, const NodeLabels& labels, const NodeSplit& split,
                            const TrainConfig& config) {
  validate(config);
  NcRun run;
  run.model = std::make_unique<NodeClassifier>(config, graph.num_nodes(), graph.num_relations(), labels.num_classes());
  NodeClassifier& model = *run.model;
  Rng rng(config.seed + kStreamOffset);

  double best_val = -1.0;
  std::size_t since_best = 0;
  std::vector<Tensor> best_params;

  OptimizeOptions opt;
  opt.epochs = config.epochs;
  opt.lr = config.lr;
  opt.l2_penalty = config.l2_penalty;
  opt.after_epoch = [&](std::size_t epoch, double loss) {
    const Tensor probs = model.predict(graph);
    EpochRecord rec{epoch + 1, loss, accuracy_on(probs, labels, split.train), accuracy_on(probs, labels, split.valid)};
    run.history.push_back(rec);
    if (!config.early_stopping) return true;
    if (rec.val_metric > best_val) {
      best_val = rec.val_metric;
      best_params = snapshot(model.params());
      since_best = 0;
      return true;
    }
    return ++since_best < config.patience;
  };
  optimize(
      model.params(),
      [&](Tape& tape, std::size_t) {
        auto out = model.forward(tape, graph, true, &rng, false);
        return nc_loss(out.probs, labels, split.train, &run.clamped);
      },
      opt);
  if (config.early_stopping && !best_params.empty()) restore(model.params(), best_params);

  const Tensor probs = model.predict(graph);
  run.train_acc = accuracy_on(probs, labels, split.train);
  run.val_acc = accuracy_on(probs, labels, split.valid);
  run.test_acc = accuracy_on(probs, labels, split.test);
  return run;
}

// ------------------------------------------------------------ link prediction

LinkPredictor::LinkPredictor(const TrainConfig& config, std::size_t num_entities, std::size_t num_relations,
                             bool standalone)
    : config_(config), standalone_(standalone), params_(std::make_unique<ParameterSet>()) {
  Rng init(config.seed);
  if (standalone) {
    free_entities_ = &params_->add("entities", uniform_embedding(num_entities, config.embedding_dim, init));
  } else {
    std::vector<std::size_t> dims{num_entities};
    for (std::size_t l = 0; l + 1 < config.lp_layers; ++l) dims.push_back(config.hidden_units);
    dims.push_back(config.embedding_dim);
    LayerConfig base;
    base.num_relations = num_relations;
    base.num_bases = config.num_bases;
    base.leaky_slope = config.leaky_slope;
    base.mode = config.mode;
    base.input_projection = config.input_projection;
    encoder_ = BrgcnStack("encoder", dims, base, *params_, init);
  }
  decoder_ = Decoder("decoder", config.decoder, num_relations, config.embedding_dim, *params_, init);
}

Var LinkPredictor::entities(Tape& tape, const HeteroGraph& graph, bool training, Rng* rng) const {
  if (standalone_) return tape.param(*free_entities_);
  ForwardOptions opt;
  opt.training = training;
  opt.dropout = config_.dropout;
  opt.rng = rng;
  opt.record_trace = false;
  return encoder_.forward(tape, one_hot_features(tape, graph.num_nodes()), graph, opt).h;
}

Tensor LinkPredictor::entity_values(const HeteroGraph& graph) const {
  if (standalone_) return free_entities_->value;
  Tape tape;
  return entities(tape, graph, false, nullptr).value();
}

Var link_prediction_loss(Tape& tape, const LinkPredictor& model, const HeteroGraph& graph,
                         std::span<const Triple> positives, std::span<const Triple> negatives, std::size_t omega,
                         bool training, Rng* rng, std::size_t* clamped) {
  std::vector<Triple> batch(positives.begin(), positives.end());
  batch.insert(batch.end(), negatives.begin(), negatives.end());
  std::vector<int> y(batch.size(), 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(positives.size()), 1);
  Var e = model.entities(tape, graph, training, rng);
  Var scores = model.decoder().score(tape, e, batch);
  return lp_loss(scores, y, positives.size(), omega, clamped);
}

LpRun train_link_predictor(const HeteroGraph& graph, std::span<const Triple> train, const TrainConfig& config,
                           bool standalone,
                           const std::function<double(const LinkPredictor&, std::size_t epoch)>& val_metric) {
  validate(config);
  if (train.empty()) throw EmptyGraphError("link prediction needs at least one training triple");
  LpRun run;
  run.model = std::make_unique<LinkPredictor>(config, graph.num_nodes(), graph.num_relations(), standalone);
  LinkPredictor& model = *run.model;
  Rng rng(config.seed + kStreamOffset);
  const TripleSet known = make_triple_set(train);

  double best_val = -1.0;
  std::size_t since_best = 0;
  std::vector<Tensor> best_params;

  OptimizeOptions opt;
  opt.epochs = config.epochs;
  opt.lr = config.lr;
  opt.l2_penalty = config.l2_penalty;
  opt.after_epoch = [&](std::size_t epoch, double loss) {
    EpochRecord rec{epoch + 1, loss, 0.0, val_metric ? val_metric(model, epoch) : 0.0};
    run.history.push_back(rec);
    if (!config.early_stopping || !val_metric) return true;
    if (rec.val_metric > best_val) {
      best_val = rec.val_metric;
      best_params = snapshot(model.params());
      since_best = 0;
      return true;
    }
    return ++since_best < config.patience;
  };
  optimize(
      model.params(),
      [&](Tape& tape, std::size_t) {
        std::vector<Triple> negatives;
        negatives.reserve(train.size() * config.omega);
        for (const Triple& t : train)
          for (const auto& s : negative_sample(t, graph.num_nodes(), known, config.omega, rng)) negatives.push_back(s.triple);
        return link_prediction_loss(tape, model, graph, train, negatives, config.omega, true, &rng, &run.clamped);
      },
      opt);
  if (config.early_stopping && !best_params.empty()) restore(model.params(), best_params);
  return run;
}

// ------------------------------------------------------------------ output

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,loss,train_acc,val_metric\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt(r.loss) << ',' << fmt(r.train_acc) << ',' << fmt(r.val_metric) << '\n';
  }
}

}  // namespace brgcn
