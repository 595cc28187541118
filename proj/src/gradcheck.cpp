#include "glmotion/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace glmotion {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const Tensor value = loss();
  if (value.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  return value.item();
}

}  // namespace

GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  const GradCheckOptions& options) {
  for (const auto& [name, p] : params) {
    if (!p.requires_grad()) throw StateError("grad_check: parameter " + name + " does not require grad");
    Tensor handle = p;
    handle.zero_grad();
  }
  const double first = evaluate(loss);
  const double second = evaluate(loss);
  if (first != second) {
    throw DeterminismError("grad_check: repeated evaluation differs (" + std::to_string(first) +
                           " vs " + std::to_string(second) + ")");
  }
  Tensor root = loss();
  backward(root);
  if (root.item() != first) throw DeterminismError("grad_check: recorded forward differs from replay");

  GradCheckReport report;
  for (const auto& [name, param] : params) {
    Tensor p = param;
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double up = evaluate(loss);
      values[i] = original - options.step;
      const double down = evaluate(loss);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double rel = relative_error(analytic[i], numeric, options.abs_floor);
      const double abs_err = std::abs(analytic[i] - numeric);
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (report.worst.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol) {
  Tensor input = x;
  if (!input.requires_grad()) input.set_requires_grad(true);
  GradCheckOptions options;
  options.step = step;
  options.tol = tol;
  return grad_check_params([&] { return f(input); }, {{"x", input}}, options);
}

}  // namespace glmotion
