#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "brgcn/autodiff.hpp"
#include "brgcn/checkpoint.hpp"
#include "brgcn/errors.hpp"
#include "brgcn/grad_check.hpp"
#include "brgcn/rng.hpp"
#include "synthetic.hpp"

using namespace brgcn;

namespace {

Var scalar_of(Tape& tape, Parameter& p) { return tape.param(p); }

double backward_grad(const std::function<Var(Var)>& f, double x0) {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::scalar(x0));
  x.zero_grad();
  Tape tape;
  tape.backward(f(tape.param(x)));
  return x.grad.item();
}

// One random primitive instance: builds Σ w ⊙ op(inputs) so every output
// entry carries a distinct weight.
struct Primitive {
  std::string name;
  std::vector<Shape> shapes;
  double lo = -2.0, hi = 2.0;
  std::function<Var(Tape&, std::vector<Var>&)> op;
};

std::vector<Primitive> primitives() {
  using V = std::vector<Var>;
  return {
      {"matmul", {{3, 4}, {4, 2}}, -2, 2, [](Tape&, V& v) { return ad::matmul(v[0], v[1]); }},
      {"matvec", {{3, 4}, {4}}, -2, 2, [](Tape&, V& v) { return ad::matmul(v[0], v[1]); }},
      {"add", {{3, 2}, {3, 2}}, -2, 2, [](Tape&, V& v) { return ad::add(v[0], v[1]); }},
      {"add_broadcast", {{3, 2}, {2}}, -2, 2, [](Tape&, V& v) { return ad::add(v[0], v[1]); }},
      {"sub", {{4}, {4}}, -2, 2, [](Tape&, V& v) { return ad::sub(v[0], v[1]); }},
      {"concat", {{3}, {2}}, -2, 2, [](Tape&, V& v) { return ad::concat(v); }},
      {"concat_cols", {{2, 3}, {2, 1}}, -2, 2, [](Tape&, V& v) { return ad::concat(v, 1); }},
      {"mul", {{3, 2}, {3, 2}}, -2, 2, [](Tape&, V& v) { return ad::mul(v[0], v[1]); }},
      {"sum_axis0", {{3, 4}}, -2, 2, [](Tape&, V& v) { return ad::sum(v[0], 0); }},
      {"sum_axis1", {{3, 4}}, -2, 2, [](Tape&, V& v) { return ad::sum(v[0], 1); }},
      {"exp", {{5}}, -2, 2, [](Tape&, V& v) { return ad::exp(v[0]); }},
      {"log", {{5}}, 0.2, 2, [](Tape&, V& v) { return ad::log(v[0]); }},
      {"leaky_relu", {{6}}, -2, 2, [](Tape&, V& v) { return ad::leaky_relu(v[0], 0.2); }},
      {"relu", {{6}}, -2, 2, [](Tape&, V& v) { return ad::relu(v[0]); }},
      {"sigmoid", {{5}}, -2, 2, [](Tape&, V& v) { return ad::sigmoid(v[0]); }},
      {"softmax", {{5}}, -2, 2, [](Tape&, V& v) { return ad::softmax(v[0]); }},
      {"softmax_rows", {{3, 4}}, -2, 2, [](Tape&, V& v) { return ad::softmax(v[0]); }},
      {"dot", {{5}, {5}}, -2, 2, [](Tape&, V& v) { return ad::dot(v[0], v[1]); }},
      {"l2_norm", {{5}}, -2, 2, [](Tape&, V& v) { return ad::l2_norm(v[0]); }},
      {"l2_norm_rows", {{3, 4}}, -2, 2, [](Tape&, V& v) { return ad::l2_norm(v[0], 1); }},
      {"transpose", {{2, 3}}, -2, 2, [](Tape&, V& v) { return ad::transpose(v[0]); }},
      {"index_select", {{4, 3}}, -2, 2, [](Tape&, V& v) { return ad::index_select(v[0], 0, {2, 0, 2}); }},
      {"reshape", {{2, 3}}, -2, 2, [](Tape&, V& v) { return ad::reshape(v[0], {3, 2}); }},
      {"stack", {{3}, {3}}, -2, 2, [](Tape&, V& v) { return ad::stack(v); }},
      {"mean", {{2, 3}}, -2, 2, [](Tape&, V& v) { return ad::mean(v[0]); }},
  };
}

}  // namespace

TEST(Autodiff, SoftmaxOfEqualLogitsIsUniform) {
  Tape tape;
  Var s = ad::softmax(tape.constant(Tensor::vector({0, 0, 0})));
  for (double v : s.value().values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Autodiff, LeakyReluNegativeInput) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ad::leaky_relu(tape.constant(Tensor::scalar(-2)), 0.2).value().item(), -0.4);
}

TEST(Autodiff, SigmoidDerivativeAtZero) {
  EXPECT_DOUBLE_EQ(backward_grad([](Var x) { return ad::sigmoid(x); }, 0.0), 0.25);
}

TEST(Autodiff, SoftmaxSumsToOneAndIsShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(7);
    for (auto& v : x) v = rng.uniform(-30, 30);
    const double c = rng.uniform(-100, 100);
    std::vector<double> shifted = x;
    for (auto& v : shifted) v += c;
    Tape tape;
    const Tensor a = ad::softmax(tape.constant(Tensor::vector(x))).value();
    const Tensor b = ad::softmax(tape.constant(Tensor::vector(shifted))).value();
    double total = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      total += a[k];
      EXPECT_NEAR(a[k], b[k], 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Autodiff, FanOutAccumulates) {
  auto f = [](Var x) { return ad::mul(x, x); };
  auto g = [](Var x) { return ad::exp(x); };
  const double x0 = 0.7;
  const double both = backward_grad([&](Var x) { return ad::add(f(x), g(x)); }, x0);
  EXPECT_NEAR(both, backward_grad(f, x0) + backward_grad(g, x0), 1e-14);
  EXPECT_NEAR(both, 2 * x0 + std::exp(x0), 1e-14);
}

TEST(Autodiff, NonFiniteValuesNameTheOp) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-1.0}));
  try {
    ad::log(x);
    FAIL() << "log(-1) did not throw";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ad::exp(tape.constant(Tensor::scalar(1000.0))), NumericError);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(ad::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), DimensionError);
  EXPECT_THROW(ad::add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), DimensionError);
}

TEST(GradCheck, SquareAtThree) {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::scalar(3.0));
  std::vector<Parameter*> params{&x};
  auto report = grad_check([&](Tape& t) { return ad::mul(t.param(x), t.param(x)); }, params, 1e-5, 1e-6);
  EXPECT_TRUE(report.passed);
  EXPECT_NEAR(report.worst_analytic, 6.0, 1e-12);
  EXPECT_NEAR(report.worst_numeric, 6.0, 1e-6);
}

TEST(GradCheck, DetectsWrongBackward) {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::vector({0.3, -1.1, 2.0}));
  std::vector<Parameter*> params{&x};
  // Square whose backward forgets the factor 2.
  auto mutated = [&](Tape& t) {
    Var v = t.param(x);
    Tensor out = v.value();
    for (auto& e : out.data()) e *= e;
    Var sq = t.record("bad_square", out, {v}, [v](Tape& tape, std::size_t self) {
      Tensor& g = tape.grad(v.id());
      const Tensor& up = tape.grad(self);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += up[k] * v.value()[k];
    });
    return ad::sum(sq);
  };
  EXPECT_FALSE(grad_check(mutated, params, 1e-5, 1e-6).passed);
}

TEST(GradCheck, RejectsNondeterministicLoss) {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::scalar(1.0));
  std::vector<Parameter*> params{&x};
  int calls = 0;
  auto drifting = [&](Tape& t) { return ad::scale(t.param(x), 1.0 + 1e-3 * ++calls); };
  EXPECT_THROW(grad_check(drifting, params, 1e-5, 1e-6), DeterminismError);
}

TEST(GradCheck, RejectsEpsOutOfRange) {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::scalar(1.0));
  std::vector<Parameter*> params{&x};
  auto f = [&](Tape& t) { return scalar_of(t, x); };
  EXPECT_THROW(grad_check(f, params, 1e-2, 1e-6), PreconditionError);
  EXPECT_THROW(grad_check(f, params, 1e-9, 1e-6), PreconditionError);
}

TEST(GradCheck, EveryPrimitiveOverRandomInputs) {
  Rng rng(11);
  for (const Primitive& prim : primitives()) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      ParameterSet ps;
      std::vector<Parameter*> params;
      for (std::size_t k = 0; k < prim.shapes.size(); ++k) {
        Tensor init(prim.shapes[k]);
        for (auto& v : init.data()) {
          v = rng.uniform(prim.lo, prim.hi);
          // Keep kinked ops away from the kink.
          if (std::abs(v) < 1e-3) v = 0.5;
        }
        params.push_back(&ps.add("in" + std::to_string(k), init));
      }
      Tensor weights;
      bool have_weights = false;
      auto loss = [&](Tape& tape) {
        std::vector<Var> in;
        for (Parameter* p : params) in.push_back(tape.param(*p));
        Var out = prim.op(tape, in);
        if (!have_weights) {
          weights = Tensor(out.shape());
          for (auto& w : weights.data()) w = rng.uniform(-1, 1);
          have_weights = true;
        }
        return ad::sum(ad::mul(out, tape.constant(weights)));
      };
      auto report = grad_check(loss, params, 1e-5, 1e-6);
      worst = std::max(worst, report.max_rel_error);
      ASSERT_TRUE(report.passed) << prim.name << " trial " << trial << " rel " << report.max_rel_error;
    }
    SCOPED_TRACE(prim.name);
    EXPECT_LE(worst, 1e-6);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(5);
  ParameterSet ps;
  ps.add("layer.w", testkit::random_matrix(3, 4, -1, 1, rng));
  ps.add("layer.v", Tensor::vector({0.1, 1.0 / 3.0, -2e-300}));
  ps.add("s", Tensor::scalar(std::nextafter(1.0, 2.0)));
  std::stringstream buf;
  write_checkpoint(buf, ps);
  NamedTensors saved = read_checkpoint(buf);

  ParameterSet copy;
  copy.add("layer.w", Tensor({3, 4}));
  copy.add("layer.v", Tensor({3}));
  copy.add("s", Tensor::scalar(0));
  load_into(saved, copy);
  for (const auto& p : ps) EXPECT_EQ(p->value, copy.at(p->name).value) << p->name;
}

TEST(Checkpoint, ShapeMismatchAndMissingEntriesRejected) {
  ParameterSet ps;
  ps.add("w", Tensor({2, 2}, 1.0));
  std::stringstream buf;
  write_checkpoint(buf, ps);
  NamedTensors saved = read_checkpoint(buf);

  ParameterSet wrong_shape;
  wrong_shape.add("w", Tensor({2, 3}));
  EXPECT_THROW(load_into(saved, wrong_shape), Error);

  ParameterSet extra;
  extra.add("w", Tensor({2, 2}));
  extra.add("u", Tensor({1}));
  EXPECT_THROW(load_into(saved, extra), Error);

  std::stringstream bad("brgcn-checkpoint 99\nparams 0\n");
  EXPECT_THROW(read_checkpoint(bad), Error);
}
