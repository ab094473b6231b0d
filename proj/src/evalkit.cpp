#include "brgcn/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "brgcn/errors.hpp"
#include "brgcn/rng.hpp"

namespace brgcn {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

double accuracy(const Tensor& scores, const NodeLabels& labels, std::span<const NodeId> ids) {
  if (ids.empty()) throw PreconditionError("accuracy: empty split");
  if (scores.rank() != 2) throw DimensionError("accuracy: expected an N x K matrix");
  std::size_t correct = 0;
  for (NodeId i : ids) {
    if (i >= scores.rows()) throw BoundsError("accuracy: node " + std::to_string(i) + " out of range");
    const auto row = scores.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels.label(i)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ids.size());
}

// ------------------------------------------------------------------ ranking

RankMetrics summarize_ranks(std::span<const std::size_t> ranks) {
  RankMetrics m;
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1;
    m.hits3 += r <= 3;
    m.hits10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

RankReport rank_triples(const TripleScorer& scorer, std::span<const Triple> test, std::size_t num_entities,
                        const TripleSet& known) {
  RankReport report;
  std::vector<std::size_t> raw, filt;
  for (const Triple& t : test) {
    if (t.head >= num_entities || t.tail >= num_entities) throw BoundsError("rank_triples: entity id out of range");
    const double target = scorer(t);
    RankResult res{t, 1, 1, 1, 1};
    for (NodeId e = 0; e < num_entities; ++e) {
      if (e != t.tail) {
        const Triple c{t.head, t.rel, e};
        if (scorer(c) >= target) {
          ++res.raw_tail;
          if (!known.count(c)) ++res.filt_tail;
        }
      }
      if (e != t.head) {
        const Triple c{e, t.rel, t.tail};
        if (scorer(c) >= target) {
          ++res.raw_head;
          if (!known.count(c)) ++res.filt_head;
        }
      }
    }
    raw.push_back(res.raw_head);
    raw.push_back(res.raw_tail);
    filt.push_back(res.filt_head);
    filt.push_back(res.filt_tail);
    report.ranks.push_back(res);
  }
  report.raw = summarize_ranks(raw);
  report.filtered = summarize_ranks(filt);
  return report;
}

// ------------------------------------------------------- attention analysis

std::vector<double> relation_attention_scores(std::span<const AttentionTrace> traces, std::size_t num_relations) {
  std::vector<double> total(num_relations, 0.0);
  std::vector<std::size_t> count(num_relations, 0);
  for (const auto& trace : traces) {
    for (const auto& node : trace.nodes) {
      const std::size_t m = node.num_relations();
      if (m == 0 || node.psi.size() != m * m) continue;
      for (std::size_t c = 0; c < m; ++c) {
        const RelId r = node.relations[c];
        if (r >= num_relations) continue;
        double col = 0.0;
        for (std::size_t row = 0; row < m; ++row) col += node.psi_at(row, c);
        total[r] += col / static_cast<double>(m);
        ++count[r];
      }
    }
  }
  for (std::size_t r = 0; r < num_relations; ++r) total[r] = count[r] ? total[r] / static_cast<double>(count[r]) : 0.0;
  return total;
}

double relation_attention_score(std::span<const AttentionTrace> traces, RelId r) {
  return relation_attention_scores(traces, r + 1)[r];
}

std::string_view to_string(AblationStrategy s) {
  switch (s) {
    case AblationStrategy::Random: return "random";
    case AblationStrategy::TopAttention: return "top_attention";
    case AblationStrategy::BottomAttention: return "bottom_attention";
  }
  return "?";
}

std::optional<AblationStrategy> parse_ablation_strategy(std::string_view s) {
  if (s == "random") return AblationStrategy::Random;
  if (s == "top_attention" || s == "top") return AblationStrategy::TopAttention;
  if (s == "bottom_attention" || s == "bottom") return AblationStrategy::BottomAttention;
  return std::nullopt;
}

std::size_t retained_count(double fraction, std::size_t num_candidates) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("ablation fraction must lie in (0, 1]");
  // The small slack keeps 0.3 * 10 at 3 despite 0.3 being stored inexactly.
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_candidates) - 1e-9));
  if (k == 0) throw ConfigError("ablation fraction " + fmt(fraction) + " retains no relations");
  return std::min(k, num_candidates);
}

std::vector<RelId> ablation_order(AblationStrategy strategy, std::span<const RelId> candidates,
                                  std::span<const double> scores, std::uint64_t seed) {
  std::vector<RelId> order(candidates.begin(), candidates.end());
  auto score_of = [&](RelId r) { return r < scores.size() ? scores[r] : 0.0; };
  switch (strategy) {
    case AblationStrategy::TopAttention:
      std::stable_sort(order.begin(), order.end(), [&](RelId a, RelId b) { return score_of(a) > score_of(b); });
      break;
    case AblationStrategy::BottomAttention:
      std::stable_sort(order.begin(), order.end(), [&](RelId a, RelId b) { return score_of(a) < score_of(b); });
      break;
    case AblationStrategy::Random: {
      Rng rng(seed);
      rng.shuffle(order);
      break;
    }
  }
  return order;
}

AblationSplit make_ablation_split(AblationStrategy strategy, double fraction, std::span<const RelId> candidates,
                                  std::span<const double> scores, std::uint64_t seed) {
  const std::size_t k = retained_count(fraction, candidates.size());
  std::vector<RelId> order = ablation_order(strategy, candidates, scores, seed);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return {strategy, fraction, std::move(order)};
}

std::vector<double> base_relation_scores(const HeteroGraph& base_graph, const NodeLabels& labels,
                                         const NodeSplit& split, const TrainConfig& config) {
  const HeteroGraph graph = augment(base_graph, config.add_inverse, config.add_self_loop);
  NcRun run = train_node_classifier(graph, labels, split, config);
  std::vector<AttentionTrace> traces;
  run.model->predict(graph, &traces);
  std::vector<double> all = relation_attention_scores(traces, graph.num_relations());
  all.resize(base_graph.num_relations());
  return all;
}

std::vector<AblationRow> ablate(const HeteroGraph& base_graph, const NodeLabels& labels, const NodeSplit& split,
                                const TrainConfig& config, std::span<const double> scores,
                                std::span<const AblationStrategy> strategies, std::span<const double> fractions) {
  const std::vector<RelId> candidates = base_graph.base_relations();
  if (candidates.empty()) throw EmptyGraphError("ablate: graph has no base relations");
  std::vector<AblationRow> rows;
  for (AblationStrategy s : strategies) {
    for (double f : fractions) {
      AblationSplit sp = make_ablation_split(s, f, candidates, scores, config.seed);
      const HeteroGraph sub = augment(restrict_relations(base_graph, sp.retained), config.add_inverse, config.add_self_loop);
      NcRun run = train_node_classifier(sub, labels, split, config);
      rows.push_back({s, f, config.seed, run.test_acc, std::move(sp.retained)});
    }
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "strategy,fraction,seed,accuracy\n";
  for (const auto& r : rows) out << to_string(r.strategy) << ',' << fmt(r.fraction) << ',' << r.seed << ',' << fmt(r.accuracy) << '\n';
}

}  // namespace brgcn
