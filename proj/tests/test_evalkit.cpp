#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "brgcn/errors.hpp"
#include "brgcn/evalkit.hpp"
#include "synthetic.hpp"

using namespace brgcn;

namespace {

NodeLabels labels_for(const std::vector<std::size_t>& classes, std::size_t K) {
  auto g = HeteroGraph::from_triples(classes.size(), {}, {});
  std::vector<std::pair<NodeId, std::size_t>> pairs;
  for (NodeId i = 0; i < classes.size(); ++i) pairs.emplace_back(i, classes[i]);
  return make_labels(g, pairs, K);
}

AttentionTrace single_node_trace(std::vector<RelId> rels, std::vector<double> psi) {
  AttentionTrace t;
  NodeTrace n;
  n.relations = std::move(rels);
  n.psi = std::move(psi);
  t.nodes.push_back(n);
  return t;
}

// Rank by listing every corruption explicitly.
struct Enumerated {
  std::size_t raw_head, raw_tail, filt_head, filt_tail;
};

Enumerated enumerate(const std::map<Triple, double>& table, const Triple& target, std::size_t n,
                     const std::set<Triple>& known) {
  Enumerated e{1, 1, 1, 1};
  const double s = table.at(target);
  for (NodeId c = 0; c < n; ++c) {
    const Triple head{c, target.rel, target.tail};
    if (head != target && table.at(head) >= s) {
      ++e.raw_head;
      if (!known.count(head)) ++e.filt_head;
    }
    const Triple tail{target.head, target.rel, c};
    if (tail != target && table.at(tail) >= s) {
      ++e.raw_tail;
      if (!known.count(tail)) ++e.filt_tail;
    }
  }
  return e;
}

void expect_metric_orderings(const RankReport& report) {
  EXPECT_GE(report.filtered.mrr, report.raw.mrr);
  for (const RankMetrics& m : {report.raw, report.filtered}) {
    EXPECT_LE(m.hits1, m.hits3);
    EXPECT_LE(m.hits3, m.hits10);
  }
  for (const RankResult& r : report.ranks) {
    EXPECT_GE(r.filt_head, 1u);
    EXPECT_GE(r.filt_tail, 1u);
    EXPECT_LE(r.filt_head, r.raw_head);
    EXPECT_LE(r.filt_tail, r.raw_tail);
  }
}

}  // namespace

// ------------------------------------------------------------------ accuracy

TEST(Accuracy, Examples) {
  auto labels = labels_for({0, 1, 1, 0}, 2);
  std::vector<NodeId> ids{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(accuracy(Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}, {0.4, 0.6}, {0.7, 0.3}}), labels, ids), 100.0);
  EXPECT_DOUBLE_EQ(accuracy(Tensor::matrix({{0.9, 0.1}, {0.8, 0.2}, {0.6, 0.4}, {0.3, 0.7}}), labels, ids), 25.0);
  EXPECT_THROW(accuracy(Tensor({4, 2}), labels, std::vector<NodeId>{}), PreconditionError);
}

// ------------------------------------------------------------------- ranking

TEST(Ranking, SummaryOfKnownRanks) {
  std::vector<std::size_t> ranks{1, 3, 20};
  auto m = summarize_ranks(ranks);
  EXPECT_DOUBLE_EQ(m.mrr, (1 + 1.0 / 3 + 1.0 / 20) / 3);
  EXPECT_DOUBLE_EQ(m.hits1, 1.0 / 3);
  EXPECT_DOUBLE_EQ(m.hits3, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.hits10, 2.0 / 3);
}

TEST(Ranking, PerfectScorer) {
  std::vector<Triple> test{{0, 0, 1}, {2, 1, 3}, {3, 0, 0}};
  auto known = make_triple_set(test);
  auto report = rank_triples([&](const Triple& t) { return known.contains(t) ? 1.0 : 0.0; }, test, 5, known);
  EXPECT_DOUBLE_EQ(report.filtered.mrr, 1.0);
  EXPECT_DOUBLE_EQ(report.filtered.hits1, 1.0);
}

TEST(Ranking, ConstantScorerRanksLast) {
  std::vector<Triple> test{{0, 0, 1}};
  TripleSet known = make_triple_set(test);
  auto report = rank_triples([](const Triple&) { return 0.0; }, test, 6, known);
  EXPECT_EQ(report.ranks[0].raw_head, 6u);
  EXPECT_EQ(report.ranks[0].raw_tail, 6u);
}

TEST(Ranking, FourEntityKgMatchesEnumeration) {
  Rng rng(1);
  const std::size_t n = 4;
  for (int trial = 0; trial < 200; ++trial) {
    std::map<Triple, double> table;
    for (NodeId h = 0; h < n; ++h)
      for (RelId r = 0; r < 2; ++r)
        // Coarse scores force ties.
        for (NodeId t = 0; t < n; ++t) table[{h, r, t}] = static_cast<double>(rng.below(4));
    std::vector<Triple> all;
    for (const auto& [t, s] : table) all.push_back(t);
    rng.shuffle(all);
    std::vector<Triple> known_list(all.begin(), all.begin() + 10);
    std::vector<Triple> test(known_list.begin(), known_list.begin() + 4);
    auto known = make_triple_set(known_list);
    std::set<Triple> known_set(known_list.begin(), known_list.end());

    auto report = rank_triples([&](const Triple& t) { return table.at(t); }, test, n, known);
    ASSERT_EQ(report.ranks.size(), test.size());
    std::vector<std::size_t> raw, filt;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const auto e = enumerate(table, test[k], n, known_set);
      EXPECT_EQ(report.ranks[k].raw_head, e.raw_head);
      EXPECT_EQ(report.ranks[k].raw_tail, e.raw_tail);
      EXPECT_EQ(report.ranks[k].filt_head, e.filt_head);
      EXPECT_EQ(report.ranks[k].filt_tail, e.filt_tail);
      raw.insert(raw.end(), {e.raw_head, e.raw_tail});
      filt.insert(filt.end(), {e.filt_head, e.filt_tail});
    }
    double mrr = 0.0;
    for (auto r : filt) mrr += 1.0 / static_cast<double>(r);
    EXPECT_NEAR(report.filtered.mrr, mrr / static_cast<double>(filt.size()), 1e-15);
    expect_metric_orderings(report);
  }
}

// ------------------------------------------------------- attention scores

TEST(AttentionScore, SingleNodeExample) {
  std::vector<AttentionTrace> traces{single_node_trace({0, 1}, {0.7, 0.3, 0.6, 0.4})};
  EXPECT_NEAR(relation_attention_score(traces, 0), 0.65, 1e-15);
  EXPECT_NEAR(relation_attention_score(traces, 1), 0.35, 1e-15);
  EXPECT_EQ(relation_attention_score(traces, 2), 0.0);
}

TEST(AttentionScore, UniformPsi) {
  AttentionTrace t;
  for (std::size_t m : {1, 2, 3, 4}) {
    NodeTrace n;
    for (RelId r = 0; r < m; ++r) n.relations.push_back(r);
    n.psi.assign(m * m, 1.0 / static_cast<double>(m));
    std::vector<AttentionTrace> traces{AttentionTrace{{n}}};
    for (RelId r = 0; r < m; ++r) EXPECT_NEAR(relation_attention_score(traces, r), 1.0 / m, 1e-15);
  }
}

TEST(AttentionScore, RangeAndColumnMeansOfTrainedModel) {
  auto pg = testkit::planted_graph(3);
  auto g = augment(pg.graph, true, false);
  TrainConfig c;
  c.epochs = 5;
  c.hidden_units = 4;
  NodeClassifier model(c, g.num_nodes(), g.num_relations(), 2);
  std::vector<AttentionTrace> traces;
  model.predict(g, &traces);
  for (double s : relation_attention_scores(traces, g.num_relations())) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  for (const AttentionTrace& tr : traces) {
    for (const NodeTrace& n : tr.nodes) {
      const std::size_t m = n.relations.size();
      double total = 0.0;
      for (std::size_t col = 0; col < m; ++col)
        for (std::size_t row = 0; row < m; ++row) total += n.psi_at(row, col) / static_cast<double>(m);
      if (m > 0) {
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

// ------------------------------------------------------------------ ablation

TEST(Ablation, RetainedCount) {
  EXPECT_EQ(retained_count(0.1, 10), 1u);
  EXPECT_EQ(retained_count(0.3, 10), 3u);
  EXPECT_EQ(retained_count(0.7, 10), 7u);
  EXPECT_EQ(retained_count(0.1, 3), 1u);
  EXPECT_EQ(retained_count(0.5, 3), 2u);
  EXPECT_EQ(retained_count(1.0, 3), 3u);
  EXPECT_THROW(retained_count(0.0, 3), ConfigError);
  EXPECT_THROW(retained_count(1.5, 3), ConfigError);
  EXPECT_THROW(retained_count(0.5, 0), ConfigError);
}

TEST(Ablation, OrdersByScore) {
  std::vector<RelId> cands{0, 1, 2, 3};
  std::vector<double> scores{0.2, 0.5, 0.2, 0.1};
  EXPECT_EQ(ablation_order(AblationStrategy::TopAttention, cands, scores, 0), (std::vector<RelId>{1, 0, 2, 3}));
  EXPECT_EQ(ablation_order(AblationStrategy::BottomAttention, cands, scores, 0), (std::vector<RelId>{3, 0, 2, 1}));
  auto a = ablation_order(AblationStrategy::Random, cands, scores, 7);
  EXPECT_EQ(a, ablation_order(AblationStrategy::Random, cands, scores, 7));
  EXPECT_TRUE(std::is_permutation(a.begin(), a.end(), cands.begin()));
}

TEST(Ablation, SplitsAreNested) {
  Rng rng(2);
  std::vector<RelId> cands(13);
  std::iota(cands.begin(), cands.end(), 0);
  std::vector<double> scores(13);
  for (auto& s : scores) s = rng.uniform();
  for (auto strategy : {AblationStrategy::Random, AblationStrategy::TopAttention, AblationStrategy::BottomAttention}) {
    std::set<RelId> previous;
    for (int step = 1; step <= 10; ++step) {
      auto split = make_ablation_split(strategy, step / 10.0, cands, scores, 5);
      EXPECT_EQ(split.retained.size(), retained_count(step / 10.0, 13));
      std::set<RelId> current(split.retained.begin(), split.retained.end());
      EXPECT_TRUE(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
      previous = current;
    }
    EXPECT_EQ(previous.size(), 13u);
  }
}

TEST(Ablation, FullFractionGivesIdenticalAccuracy) {
  auto pg = testkit::planted_graph(4);
  TrainConfig c;
  c.epochs = 10;
  c.hidden_units = 4;
  c.lr = 0.05;
  std::vector<double> scores{0.5, 0.3, 0.2};
  std::vector<AblationStrategy> strategies{AblationStrategy::Random, AblationStrategy::TopAttention,
                                           AblationStrategy::BottomAttention};
  std::vector<double> fractions{1.0};
  auto rows = ablate(pg.graph, pg.labels, pg.split, c, scores, strategies, fractions);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].accuracy, rows[1].accuracy);
  EXPECT_EQ(rows[1].accuracy, rows[2].accuracy);
  for (const auto& row : rows) EXPECT_EQ(row.retained.size(), 3u);
}

TEST(Ablation, StrategyNames) {
  for (auto s : {AblationStrategy::Random, AblationStrategy::TopAttention, AblationStrategy::BottomAttention})
    EXPECT_EQ(parse_ablation_strategy(to_string(s)), s);
  EXPECT_EQ(parse_ablation_strategy("top"), AblationStrategy::TopAttention);
  EXPECT_FALSE(parse_ablation_strategy("middle").has_value());
}
