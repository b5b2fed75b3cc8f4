#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevodo/tensor.hpp"

namespace bevodo {

class NonDeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckReport {
  std::vector<double> per_input;  // max relative error for each input tensor
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::size_t kinks_skipped = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Inputs must be parameters (requires_grad). Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
///
/// With kink_tolerance > 0, entries whose forward and backward one-sided
/// differences disagree by more than that relative amount are treated as
/// non-differentiable within the step (relu or max-pool switching) and
/// counted in kinks_skipped instead of the error.
///
/// relative_floor raises the floor to that fraction of the largest analytic
/// gradient entry, so entries far below finite-difference resolution are
/// judged on absolute error.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double step = 1e-5,
                           double floor = 1e-8, double kink_tolerance = 0.0, double relative_floor = 0.0);

struct GradCheckCase {
  std::string name;
  std::vector<Tensor> inputs;
  ScalarFn f;
  double tolerance = 1e-6;
};

/// One randomized case per differentiable primitive of the tensor engine.
std::vector<GradCheckCase> primitive_gradcheck_cases(unsigned seed);

}  // namespace bevodo
