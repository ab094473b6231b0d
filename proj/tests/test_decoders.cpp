#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "brgcn/decoders.hpp"
#include "brgcn/errors.hpp"
#include "brgcn/grad_check.hpp"
#include "brgcn/rng.hpp"
#include "synthetic.hpp"

using namespace brgcn;

namespace {

using Vec = std::vector<double>;

constexpr DecoderKind kKinds[] = {DecoderKind::DistMult, DecoderKind::TransE, DecoderKind::HolE,
                                  DecoderKind::ComplEx};

Vec random_vec(std::size_t d, Rng& rng) {
  Vec v(d);
  for (auto& x : v) x = rng.uniform(-2, 2);
  return v;
}

// Circular correlation through the convolution theorem:
// F(h ⋆ t) = conj(F(h)) · F(t), evaluated with a direct DFT.
Vec correlation_dft(const Vec& h, const Vec& t) {
  using C = std::complex<double>;
  const std::size_t d = h.size();
  auto dft = [&](const Vec& x, double sign) {
    std::vector<C> out(d);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t n = 0; n < d; ++n) out[k] += x[n] * std::polar(1.0, sign * 2 * std::numbers::pi * k * n / d);
    return out;
  };
  const auto H = dft(h, -1), T = dft(t, -1);
  Vec out(d);
  for (std::size_t n = 0; n < d; ++n) {
    C acc = 0;
    for (std::size_t k = 0; k < d; ++k) acc += std::conj(H[k]) * T[k] * std::polar(1.0, 2 * std::numbers::pi * k * n / d);
    out[n] = acc.real() / static_cast<double>(d);
  }
  return out;
}

}  // namespace

TEST(Score, Examples) {
  EXPECT_DOUBLE_EQ(score(DecoderKind::DistMult, Vec{1, 0}, Vec{1, 1}, Vec{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(score(DecoderKind::HolE, Vec{1, 0}, Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(score(DecoderKind::HolE, Vec{1, 0}, Vec{0, 1}, Vec{0, 1}), 1.0);

  Rng rng(1);
  const Vec h = random_vec(5, rng), r = random_vec(5, rng);
  Vec t(5);
  for (std::size_t k = 0; k < 5; ++k) t[k] = h[k] + r[k];
  EXPECT_EQ(score(DecoderKind::TransE, h, r, t), 0.0);
  for (int trial = 0; trial < 100; ++trial) EXPECT_LT(score(DecoderKind::TransE, h, r, random_vec(5, rng)), 0.0);
}

TEST(Score, DimensionMismatch) {
  EXPECT_THROW(score(DecoderKind::DistMult, Vec{1, 0}, Vec{1}, Vec{1, 0}), DimensionError);
  EXPECT_THROW(score(DecoderKind::ComplEx, Vec{1, 0, 1}, Vec{1, 0, 1}, Vec{1, 0, 1}), DimensionError);
}

TEST(Score, DistMultSymmetric) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(16);
    const Vec h = random_vec(d, rng), r = random_vec(d, rng), t = random_vec(d, rng);
    EXPECT_NEAR(score(DecoderKind::DistMult, h, r, t), score(DecoderKind::DistMult, t, r, h), 1e-10);
  }
}

TEST(Score, TransETranslationInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(16);
    Vec h = random_vec(d, rng), r = random_vec(d, rng), t = random_vec(d, rng);
    const double before = score(DecoderKind::TransE, h, r, t);
    const Vec c = random_vec(d, rng);
    for (std::size_t k = 0; k < d; ++k) {
      h[k] += c[k];
      t[k] += c[k];
    }
    EXPECT_NEAR(score(DecoderKind::TransE, h, r, t), before, 1e-10);
  }
}

TEST(Score, ComplExWithRealPartsIsDistMult) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    const Vec h = random_vec(d, rng), r = random_vec(d, rng), t = random_vec(d, rng);
    auto padded = [&](const Vec& v) {
      Vec out(v);
      out.resize(2 * d, 0.0);
      return out;
    };
    EXPECT_NEAR(score(DecoderKind::ComplEx, padded(h), padded(r), padded(t)), score(DecoderKind::DistMult, h, r, t),
                1e-10);
  }
}

TEST(Score, ComplExCanBeAsymmetric) {
  // h = 1, t = i, r = i: Re(r h conj(t)) = Re(i · 1 · -i) = 1, reversed Re(i · i · 1) = -1.
  const Vec h{1, 0}, r{0, 1}, t{0, 1};
  EXPECT_DOUBLE_EQ(score(DecoderKind::ComplEx, h, r, t), 1.0);
  EXPECT_DOUBLE_EQ(score(DecoderKind::ComplEx, t, r, h), -1.0);
}

TEST(Score, HolEMatchesConvolutionTheorem) {
  Rng rng(5);
  for (std::size_t d : {2, 4, 8}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const Vec h = random_vec(d, rng), r = random_vec(d, rng), t = random_vec(d, rng);
      const Vec corr = correlation_dft(h, t);
      double expected = 0.0;
      for (std::size_t k = 0; k < d; ++k) expected += r[k] * corr[k];
      ASSERT_NEAR(score(DecoderKind::HolE, h, r, t), expected, 1e-10) << "d=" << d;
    }
  }
}

TEST(Score, TapeAgreesWithPlainEvaluation) {
  Rng rng(6);
  for (DecoderKind kind : kKinds) {
    const std::size_t B = 4, d = 6;
    Tensor H = testkit::random_matrix(B, d, -1, 1, rng), R = testkit::random_matrix(B, d, -1, 1, rng),
           T = testkit::random_matrix(B, d, -1, 1, rng);
    Tape tape;
    Var batch = score_rows(kind, tape.constant(H), tape.constant(R), tape.constant(T));
    ASSERT_EQ(batch.shape(), Shape{B});
    for (std::size_t b = 0; b < B; ++b) {
      const double plain = score(kind, H.row(b), R.row(b), T.row(b));
      EXPECT_NEAR(batch.value()[b], plain, 1e-12) << to_string(kind);
      Vec hv(H.row(b).begin(), H.row(b).end()), rv(R.row(b).begin(), R.row(b).end()),
          tv(T.row(b).begin(), T.row(b).end());
      Var single = score(kind, tape.constant(Tensor::vector(hv)), tape.constant(Tensor::vector(rv)),
                         tape.constant(Tensor::vector(tv)));
      EXPECT_NEAR(single.value().item(), plain, 1e-12);
    }
  }
}

TEST(Score, GradientsPassGradCheck) {
  Rng rng(7);
  for (DecoderKind kind : kKinds) {
    for (int trial = 0; trial < 20; ++trial) {
      ParameterSet ps;
      Parameter& H = ps.add("h", testkit::random_matrix(3, 4, -2, 2, rng));
      Parameter& R = ps.add("r", testkit::random_matrix(3, 4, -2, 2, rng));
      Parameter& T = ps.add("t", testkit::random_matrix(3, 4, -2, 2, rng));
      const Tensor w = testkit::random_matrix(1, 3, -1, 1, rng);
      auto loss = [&](Tape& tape) {
        Var s = score_rows(kind, tape.param(H), tape.param(R), tape.param(T));
        return ad::sum(ad::mul(s, tape.constant(Tensor::vector(w.values()))));
      };
      auto params = ps.pointers();
      auto report = grad_check(loss, params, 1e-5, 1e-6);
      EXPECT_TRUE(report.passed) << to_string(kind) << " rel " << report.max_rel_error;
    }
  }
}

TEST(Ensemble, Examples) {
  EXPECT_DOUBLE_EQ(ensemble_score(0.5, 0.25, 0.4), 0.35);
  EXPECT_DOUBLE_EQ(ensemble_score(0.5, 0.25, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(ensemble_score(0.5, 0.25, 0.0), 0.25);
  EXPECT_THROW(ensemble_score(0.5, 0.25, 1.5), ConfigError);
  EXPECT_THROW(ensemble_score(0.5, 0.25, -0.1), ConfigError);
}

TEST(DecoderModule, BatchScoresMatchSingleScores) {
  Rng rng(8);
  for (DecoderKind kind : kKinds) {
    ParameterSet ps;
    Decoder dec("dec", kind, 3, 4, ps, rng);
    const double bound = 0.5 / std::sqrt(4.0);
    for (double v : dec.relations().value.values()) EXPECT_LE(std::abs(v), bound);
    Tensor E = testkit::random_matrix(5, 4, -1, 1, rng);
    std::vector<Triple> triples{{0, 0, 1}, {4, 2, 3}, {2, 1, 2}};
    Tape tape;
    Var s = dec.score(tape, tape.constant(E), triples);
    for (std::size_t k = 0; k < triples.size(); ++k)
      EXPECT_NEAR(s.value()[k], dec.score(E, triples[k]), 1e-12) << to_string(kind);
  }
}

TEST(DecoderModule, UniformEmbeddingRange) {
  Rng rng(9);
  Tensor t = uniform_embedding(50, 16, rng);
  double lo = 1, hi = -1;
  for (double v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, -0.125);
  EXPECT_LE(hi, 0.125);
  EXPECT_LT(lo, -0.1);
  EXPECT_GT(hi, 0.1);
}

TEST(DecoderKindNames, RoundTrip) {
  for (DecoderKind kind : kKinds) EXPECT_EQ(parse_decoder_kind(to_string(kind)), kind);
  EXPECT_FALSE(parse_decoder_kind("rotate").has_value());
}
