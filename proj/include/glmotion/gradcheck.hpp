#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glmotion/tensor.hpp"

namespace glmotion {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-5;
  // Denominator floor for the relative error, so gradients that are both
  // ~0 analytically and numerically do not divide by zero.
  double abs_floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor name>[<flat index>]"
  bool passed = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor)
double relative_error(double analytic, double numeric, double abs_floor);

/// Central-difference check of d(loss)/d(param) for every entry of every
/// named parameter. `loss` must rebuild the graph from the current parameter
/// values on each call. Throws DeterminismError if two evaluations at the
/// same point disagree.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  const GradCheckOptions& options = {});

/// Single-input form: f(x) must be scalar-valued and deterministic.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step = 1e-5, double tol = 1e-5);

}  // namespace glmotion
