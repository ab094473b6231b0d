#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brgcn/hetgraph.hpp"
#include "brgcn/layer.hpp"
#include "brgcn/training.hpp"

namespace brgcn {

/// Argmax accuracy in percent over `ids`. Throws PreconditionError when `ids`
/// is empty.
double accuracy(const Tensor& scores, const NodeLabels& labels, std::span<const NodeId> ids);

// ------------------------------------------------------------------ ranking

struct RankResult {
  Triple triple;
  std::size_t raw_head = 0;
  std::size_t raw_tail = 0;
  std::size_t filt_head = 0;
  std::size_t filt_tail = 0;
};

struct RankMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct RankReport {
  std::vector<RankResult> ranks;
  RankMetrics raw;
  RankMetrics filtered;
};

using TripleScorer = std::function<double(const Triple&)>;

/// MRR and Hits@{1,3,10} over a flat list of ranks.
RankMetrics summarize_ranks(std::span<const std::size_t> ranks);

/// For each test triple, ranks the true head and tail against every entity.
/// Ties count against the true triple (rank = 1 + #candidates scoring >=).
/// The filtered ranks skip candidates that form a triple in `known` other
/// than the target itself.
RankReport rank_triples(const TripleScorer& scorer, std::span<const Triple> test, std::size_t num_entities,
                        const TripleSet& known);

// ------------------------------------------------------- attention analysis

/// Mean over the nodes i with r ∈ R_i of the mean of column r of ψ_i, pooled
/// over every trace given. 0 when r never occurs.
double relation_attention_score(std::span<const AttentionTrace> traces, RelId r);
std::vector<double> relation_attention_scores(std::span<const AttentionTrace> traces, std::size_t num_relations);

enum class AblationStrategy { Random, TopAttention, BottomAttention };

std::string_view to_string(AblationStrategy s);
std::optional<AblationStrategy> parse_ablation_strategy(std::string_view s);

/// ceil(fraction * num_candidates). Throws ConfigError when that is zero or
/// the fraction lies outside (0, 1].
std::size_t retained_count(double fraction, std::size_t num_candidates);

/// Candidate relations in retention order: descending score for top,
/// ascending for bottom (ties by id), and a seeded shuffle for random. Every
/// split keeps a prefix of this order, so splits are nested.
std::vector<RelId> ablation_order(AblationStrategy strategy, std::span<const RelId> candidates,
                                  std::span<const double> scores, std::uint64_t seed);

struct AblationSplit {
  AblationStrategy strategy;
  double fraction;
  std::vector<RelId> retained;
};

AblationSplit make_ablation_split(AblationStrategy strategy, double fraction, std::span<const RelId> candidates,
                                  std::span<const double> scores, std::uint64_t seed);

struct AblationRow {
  AblationStrategy strategy;
  double fraction;
  std::uint64_t seed;
  double accuracy;
  std::vector<RelId> retained;
};

/// Scores the base relations of `graph` with a model trained on the full
/// (augmented) graph.
std::vector<double> base_relation_scores(const HeteroGraph& base_graph, const NodeLabels& labels,
                                         const NodeSplit& split, const TrainConfig& config);

/// Retrains from scratch on each retained-relation subgraph and records the
/// test accuracy. `base_graph` is unaugmented; augmentation follows `config`.
/// `scores` has one entry per relation of `base_graph`.
std::vector<AblationRow> ablate(const HeteroGraph& base_graph, const NodeLabels& labels, const NodeSplit& split,
                                const TrainConfig& config, std::span<const double> scores,
                                std::span<const AblationStrategy> strategies, std::span<const double> fractions);

/// `strategy,fraction,seed,accuracy` rows.
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace brgcn
