#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "brgcn/autodiff.hpp"
#include "brgcn/hetgraph.hpp"

namespace brgcn {

class Rng;

enum class DecoderKind { DistMult, TransE, HolE, ComplEx };

std::string_view to_string(DecoderKind kind);
std::optional<DecoderKind> parse_decoder_kind(std::string_view s);

// Triple scores α, higher meaning more plausible. Vectors all have length d.
// ComplEx reads each vector as [real half | imaginary half], so d must be
// even. HolE returns the raw correlation score; the sigmoid is left to the
// loss.
//
//   distmult  Σ_k h_k r_k t_k
//   transe    -||h + r - t||_2
//   hole      Σ_k r_k Σ_m h_m t_{(m+k) mod d}
//   complex   Re(Σ_k r_k h_k conj(t_k))
double score(DecoderKind kind, std::span<const double> h, std::span<const double> r, std::span<const double> t);

/// Differentiable score of rank-1 h, r, t; returns a rank-0 value.
Var score(DecoderKind kind, Var h, Var r, Var t);

/// Scores a batch: rows of H, R and T (B x d each) give B scores.
Var score_rows(DecoderKind kind, Var H, Var R, Var T);

/// beta * alpha_encoder + (1 - beta) * alpha_embedding. Throws ConfigError
/// unless beta is in [0, 1].
double ensemble_score(double alpha_encoder, double alpha_embedding, double beta);

/// Relation embeddings plus the scoring rule. Entity embeddings come from the
/// caller.
class Decoder {
 public:
  Decoder() = default;
  /// Registers `<prefix>.relations` (num_relations x dim), initialised uniform
  /// in [-0.5/sqrt(dim), 0.5/sqrt(dim)].
  Decoder(const std::string& prefix, DecoderKind kind, std::size_t num_relations, std::size_t dim, ParameterSet& params,
          Rng& rng);

  DecoderKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  Parameter& relations() const { return *relations_; }

  /// Scores `triples` against entity embeddings E (num_entities x dim).
  Var score(Tape& tape, Var entities, std::span<const Triple> triples) const;
  /// Plain evaluation without a tape.
  double score(const Tensor& entities, const Triple& t) const;

 private:
  DecoderKind kind_ = DecoderKind::DistMult;
  std::size_t dim_ = 0;
  Parameter* relations_ = nullptr;
};

/// Uniform in [-0.5/sqrt(d), 0.5/sqrt(d)], the initialisation used for free
/// entity and relation embeddings.
Tensor uniform_embedding(std::size_t rows, std::size_t dim, Rng& rng);

}  // namespace brgcn
