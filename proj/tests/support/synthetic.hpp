#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "brgcn/autodiff.hpp"
#include "brgcn/hetgraph.hpp"
#include "brgcn/rng.hpp"
#include "brgcn/tensor.hpp"

namespace brgcn::testkit {

/// Graph on num_nodes nodes where each possible (i, r, j) edge, self loops
/// included, is present with probability `density`.
HeteroGraph random_graph(std::size_t num_nodes, std::size_t num_relations, double density, Rng& rng);

Tensor random_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

/// Overwrites every parameter with uniform draws in [lo, hi].
void randomize(ParameterSet& params, double lo, double hi, Rng& rng);

/// 60 nodes, relations r1 (informative), r2 and r3 (noise). Nodes 0..5 are
/// anchors (0..2 class 0, 3..5 class 1); every other node has two r1 edges to
/// anchors of its own class and two edges each under r2 and r3 to uniformly
/// drawn nodes. All nodes are labelled.
struct PlantedGraph {
  HeteroGraph graph;  // unaugmented
  NodeLabels labels;
  NodeSplit split;
  RelId informative = 0;
  std::vector<RelId> noise;
};

PlantedGraph planted_graph(std::uint64_t seed);

}  // namespace brgcn::testkit
