#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "brgcn/autodiff.hpp"

namespace brgcn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Relative errors are |a - n| / max(|a|, |n|, kGradCheckFloor), so entries
/// whose true gradient is (near) zero are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-3;

/// Compares the analytic gradient of `loss` against central finite
/// differences (f(θ+eps) - f(θ-eps)) / 2eps for every entry of `params`.
/// Parameter gradients are overwritten. Throws DeterminismError if two
/// evaluations at the same point differ and PreconditionError if eps is
/// outside [1e-7, 1e-3].
GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double eps, double tol);

}  // namespace brgcn
