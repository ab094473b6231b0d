#pragma once

#include <cstddef>
#include <vector>

#include "brgcn/hetgraph.hpp"
#include "brgcn/layer.hpp"

namespace brgcn::testkit {

using Matrix = std::vector<std::vector<double>>;

/// Parameter values of one layer copied out as plain matrices.
struct DenseParams {
  std::vector<std::vector<double>> attn;  // per relation, 2 d_in (empty when unused)
  std::vector<Matrix> w1, w2, w3;          // per relation, d_out x d_in
  Matrix w_self;                           // d_out x d_in
  double slope = 0.2;
  LayerMode mode = LayerMode::Full;
  bool relu = true;
};

DenseParams extract(const BrgcnLayer& layer);

/// Dense masked-adjacency evaluation of one layer: adjacency A_r[i][j] = 1
/// iff (i, r, j) is an edge, attention logits computed for every pair and
/// masked before the softmax.
Matrix dense_layer(const DenseParams& p, const Matrix& h, const HeteroGraph& graph);

struct DenseAttention {
  // gamma[i][r][j] over all j (zero outside N_i^r), psi[i] over R_i.
  std::vector<std::vector<std::vector<double>>> gamma;
  std::vector<Matrix> psi;
};

Matrix dense_layer(const DenseParams& p, const Matrix& h, const HeteroGraph& graph, DenseAttention* att);

Matrix to_matrix(const Tensor& t);
Tensor to_tensor(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace brgcn::testkit
