#include "synthetic.hpp"

#include "brgcn/autodiff.hpp"

namespace brgcn::testkit {

HeteroGraph random_graph(std::size_t num_nodes, std::size_t num_relations, double density, Rng& rng) {
  std::vector<std::string> names;
  for (std::size_t r = 0; r < num_relations; ++r) names.push_back("r" + std::to_string(r));
  std::vector<Triple> triples;
  for (NodeId i = 0; i < num_nodes; ++i)
    for (RelId r = 0; r < num_relations; ++r)
      for (NodeId j = 0; j < num_nodes; ++j)
        if (rng.uniform() < density) triples.push_back({i, r, j});
  return HeteroGraph::from_triples(num_nodes, names, triples);
}

Tensor random_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void randomize(ParameterSet& params, double lo, double hi, Rng& rng) {
  for (auto& p : params)
    for (auto& v : p->value.data()) v = rng.uniform(lo, hi);
}

PlantedGraph planted_graph(std::uint64_t seed) {
  constexpr std::size_t kNodes = 60, kAnchors = 6;
  Rng rng(seed);
  std::vector<Triple> triples;
  std::vector<std::pair<NodeId, std::size_t>> labels;
  for (NodeId a = 0; a < kAnchors; ++a) labels.emplace_back(a, a < 3 ? 0 : 1);
  for (NodeId i = kAnchors; i < kNodes; ++i) {
    const std::size_t cls = rng.coin() ? 1 : 0;
    labels.emplace_back(i, cls);
    const NodeId first = cls * 3 + rng.below(3);
    NodeId second = cls * 3 + rng.below(3);
    while (second == first) second = cls * 3 + rng.below(3);
    triples.push_back({i, 0, first});
    triples.push_back({i, 0, second});
    for (RelId r = 1; r <= 2; ++r) {
      for (int k = 0; k < 2; ++k) {
        NodeId j = rng.below(kNodes);
        while (j == i) j = rng.below(kNodes);
        triples.push_back({i, r, j});
      }
    }
  }
  PlantedGraph out;
  out.graph = HeteroGraph::from_triples(kNodes, {"r1", "r2", "r3"}, triples);
  out.labels = make_labels(out.graph, labels, 2);
  out.split = random_split(out.labels, 0.6, 0.2, rng);
  out.informative = 0;
  out.noise = {1, 2};
  return out;
}

}  // namespace brgcn::testkit
