#include "brgcn/decoders.hpp"

#include <cmath>

#include "brgcn/errors.hpp"
#include "brgcn/rng.hpp"

namespace brgcn {
namespace {

void check_dims(DecoderKind kind, std::size_t h, std::size_t r, std::size_t t) {
  if (h != r || r != t) {
    throw DimensionError("decoder " + std::string(to_string(kind)) + ": dimensions differ (" + std::to_string(h) + ", " +
                         std::to_string(r) + ", " + std::to_string(t) + ")");
  }
  if (h == 0) throw DimensionError("decoder: empty embedding");
  if (kind == DecoderKind::ComplEx && h % 2 != 0) {
    throw DimensionError("decoder complex: dimension " + std::to_string(h) + " is odd");
  }
}

std::vector<std::size_t> iota(std::size_t from, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = from + k;
  return v;
}

}  // namespace

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::DistMult: return "distmult";
    case DecoderKind::TransE: return "transe";
    case DecoderKind::HolE: return "hole";
    case DecoderKind::ComplEx: return "complex";
  }
  return "?";
}

std::optional<DecoderKind> parse_decoder_kind(std::string_view s) {
  if (s == "distmult") return DecoderKind::DistMult;
  if (s == "transe") return DecoderKind::TransE;
  if (s == "hole") return DecoderKind::HolE;
  if (s == "complex") return DecoderKind::ComplEx;
  return std::nullopt;
}

double score(DecoderKind kind, std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  check_dims(kind, h.size(), r.size(), t.size());
  const std::size_t d = h.size();
  double s = 0.0;
  switch (kind) {
    case DecoderKind::DistMult:
      for (std::size_t k = 0; k < d; ++k) s += h[k] * r[k] * t[k];
      return s;
    case DecoderKind::TransE:
      for (std::size_t k = 0; k < d; ++k) {
        const double e = h[k] + r[k] - t[k];
        s += e * e;
      }
      return -std::sqrt(s);
    case DecoderKind::HolE:
      for (std::size_t k = 0; k < d; ++k) {
        double c = 0.0;
        for (std::size_t m = 0; m < d; ++m) c += h[m] * t[(m + k) % d];
        s += r[k] * c;
      }
      return s;
    case DecoderKind::ComplEx: {
      const std::size_t n = d / 2;
      for (std::size_t k = 0; k < n; ++k) {
        const double hr = h[k], hi = h[n + k], rr = r[k], ri = r[n + k], tr = t[k], ti = t[n + k];
        s += rr * (hr * tr + hi * ti) + ri * (hr * ti - hi * tr);
      }
      return s;
    }
  }
  return s;
}

Var score_rows(DecoderKind kind, Var H, Var R, Var T) {
  const Tensor& hv = H.value();
  if (hv.rank() != 2 || R.value().shape() != hv.shape() || T.value().shape() != hv.shape()) {
    throw DimensionError("decoder " + std::string(to_string(kind)) + ": batch shapes differ " + shape_str(hv.shape()) +
                         ", " + shape_str(R.value().shape()) + ", " + shape_str(T.value().shape()));
  }
  const std::size_t d = hv.cols();
  check_dims(kind, d, d, d);
  switch (kind) {
    case DecoderKind::DistMult:
      return ad::sum(ad::mul(ad::mul(H, R), T), 1);
    case DecoderKind::TransE:
      return ad::neg(ad::l2_norm(ad::sub(ad::add(H, R), T), 1));
    case DecoderKind::HolE: {
      // Row b of the gathered matrix holds t_b shifted: entry (b, k*d + m) = t_b[(m + k) mod d].
      std::vector<std::size_t> idx(d * d);
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t m = 0; m < d; ++m) idx[k * d + m] = (m + k) % d;
      const std::size_t B = hv.rows();
      std::vector<Var> out;
      out.reserve(B);
      Var shifted = ad::index_select(T, 1, std::move(idx));
      for (std::size_t b = 0; b < B; ++b) {
        Var tb = ad::reshape(ad::take_row(shifted, b), {d, d});
        Var corr = ad::matmul(tb, ad::take_row(H, b));
        out.push_back(ad::reshape(ad::dot(ad::take_row(R, b), corr), {1}));
      }
      return ad::concat(out);
    }
    case DecoderKind::ComplEx: {
      const std::size_t n = d / 2;
      auto re = [&](Var x) { return ad::index_select(x, 1, iota(0, n)); };
      auto im = [&](Var x) { return ad::index_select(x, 1, iota(n, n)); };
      Var hr = re(H), hi = im(H), rr = re(R), ri = im(R), tr = re(T), ti = im(T);
      Var a = ad::mul(rr, ad::add(ad::mul(hr, tr), ad::mul(hi, ti)));
      Var b = ad::mul(ri, ad::sub(ad::mul(hr, ti), ad::mul(hi, tr)));
      return ad::sum(ad::add(a, b), 1);
    }
  }
  throw DimensionError("unknown decoder");
}

Var score(DecoderKind kind, Var h, Var r, Var t) {
  check_dims(kind, h.value().size(), r.value().size(), t.value().size());
  if (h.value().rank() != 1 || r.value().rank() != 1 || t.value().rank() != 1) {
    throw DimensionError("decoder: expected vectors");
  }
  const std::size_t d = h.value().size();
  Var s = score_rows(kind, ad::reshape(h, {1, d}), ad::reshape(r, {1, d}), ad::reshape(t, {1, d}));
  return ad::reshape(s, {});
}

double ensemble_score(double alpha_encoder, double alpha_embedding, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  return beta * alpha_encoder + (1.0 - beta) * alpha_embedding;
}

Tensor uniform_embedding(std::size_t rows, std::size_t dim, Rng& rng) {
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  Tensor t({rows, dim});
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Decoder::Decoder(const std::string& prefix, DecoderKind kind, std::size_t num_relations, std::size_t dim,
                 ParameterSet& params, Rng& rng)
    : kind_(kind), dim_(dim) {
  check_dims(kind, dim, dim, dim);
  relations_ = &params.add(prefix + ".relations", uniform_embedding(num_relations, dim, rng));
}

Var Decoder::score(Tape& tape, Var entities, std::span<const Triple> triples) const {
  const Tensor& e = entities.value();
  if (e.rank() != 2 || e.cols() != dim_) {
    throw DimensionError("decoder: entity embeddings have shape " + shape_str(e.shape()) + ", expected width " +
                         std::to_string(dim_));
  }
  std::vector<std::size_t> hs, rs, ts;
  hs.reserve(triples.size());
  rs.reserve(triples.size());
  ts.reserve(triples.size());
  for (const Triple& t : triples) {
    hs.push_back(t.head);
    rs.push_back(t.rel);
    ts.push_back(t.tail);
  }
  Var rel = tape.param(*relations_);
  return score_rows(kind_, ad::index_select(entities, 0, std::move(hs)), ad::index_select(rel, 0, std::move(rs)),
                    ad::index_select(entities, 0, std::move(ts)));
}

double Decoder::score(const Tensor& entities, const Triple& t) const {
  if (t.head >= entities.rows() || t.tail >= entities.rows()) throw BoundsError("decoder: entity id out of range");
  if (t.rel >= relations_->value.rows()) throw BoundsError("decoder: relation id out of range");
  return brgcn::score(kind_, entities.row(t.head), relations_->value.row(t.rel), entities.row(t.tail));
}

}  // namespace brgcn
