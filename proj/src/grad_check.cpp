#include "brgcn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "brgcn/errors.hpp"

namespace brgcn {
namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double eps, double tol) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw PreconditionError("grad_check: eps must lie in [1e-7, 1e-3]");

  const double first = evaluate(loss);
  const double second = evaluate(loss);
  if (first != second) throw DeterminismError("grad_check: loss differs between two evaluations at the same point");

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double saved = p->value[k];
      p->value[k] = saved + eps;
      const double up = evaluate(loss);
      p->value[k] = saved - eps;
      const double down = evaluate(loss);
      p->value[k] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[k];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error || report.entries_checked == 0) {
        report.max_rel_error = rel_err;
        report.worst_parameter = p->name;
        report.worst_index = k;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
      ++report.entries_checked;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace brgcn
