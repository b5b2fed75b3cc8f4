#include "bevodo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bevodo {

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double step, double floor,
                           double kink_tolerance, double relative_floor) {
  for (const auto& in : inputs) {
    if (!in.requires_grad()) throw std::invalid_argument("grad_check: inputs must be parameters");
  }
  for (auto& in : inputs) in.zero_grad();
  const Tensor y = f(inputs);
  const double y0 = y.item();
  y.backward();
  if (f(inputs).item() != y0) {
    throw NonDeterministicFunction("grad_check: repeated evaluation returned a different value");
  }

  double gmax = 0.0;
  for (const auto& in : inputs) {
    for (double g : in.grad_or_zeros()) gmax = std::max(gmax, std::abs(g));
  }
  floor = std::max(floor, relative_floor * gmax);

  GradCheckReport report;
  for (auto& in : inputs) {
    const std::vector<double> analytic = in.grad_or_zeros();
    auto vals = in.mutable_values();
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double fp = f(inputs).item();
      vals[i] = orig - step;
      const double fm = f(inputs).item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      ++report.entries;
      if (kink_tolerance > 0.0) {
        const double fwd = (fp - y0) / step, bwd = (y0 - fm) / step;
        if (std::abs(fwd - bwd) > kink_tolerance * std::max({std::abs(fwd), std::abs(bwd), floor})) {
          ++report.kinks_skipped;
          continue;
        }
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    report.per_input.push_back(worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

namespace {

class CaseBuilder {
 public:
  explicit CaseBuilder(unsigned seed) : rng_(seed) {}

  Tensor param(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = u(rng_);
    return Tensor::parameter(std::move(shape), std::move(v));
  }

  // Values bounded away from zero: |x| in [0.2, 1].
  Tensor param_nonzero(Shape shape) {
    std::uniform_real_distribution<double> u(0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = sign(rng_) ? u(rng_) : -u(rng_);
    return Tensor::parameter(std::move(shape), std::move(v));
  }

  // Fractional coordinates kept away from integer kinks.
  Tensor coords(std::size_t n, std::size_t h, std::size_t w) {
    std::uniform_int_distribution<std::size_t> ri(0, h - 2), ci(0, w - 2);
    std::uniform_real_distribution<double> frac(0.15, 0.85);
    std::vector<double> v(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      v[2 * i] = static_cast<double>(ri(rng_)) + frac(rng_);
      v[2 * i + 1] = static_cast<double>(ci(rng_)) + frac(rng_);
    }
    return Tensor::parameter({n, 2}, std::move(v));
  }

  // Random linear readout so every output entry influences the scalar.
  Tensor readout(const Shape& shape) {
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = u(rng_);
    return Tensor::constant(shape, std::move(v));
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

ScalarFn dotted(std::function<Tensor(const std::vector<Tensor>&)> op, Tensor r) {
  return [op = std::move(op), r](const std::vector<Tensor>& in) { return sum(mul(op(in), r)); };
}

}  // namespace

std::vector<GradCheckCase> primitive_gradcheck_cases(unsigned seed) {
  CaseBuilder b(seed);
  std::vector<GradCheckCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> inputs,
                      std::function<Tensor(const std::vector<Tensor>&)> op) {
    const Shape out_shape = op(inputs).shape();
    cases.push_back({std::move(name), std::move(inputs), dotted(std::move(op), b.readout(out_shape))});
  };

  add_case("add", {b.param({3, 4}), b.param({4})},
           [](const auto& in) { return add(in[0], in[1]); });
  add_case("sub", {b.param({2, 5}), b.param({2, 5})},
           [](const auto& in) { return sub(in[0], in[1]); });
  add_case("mul", {b.param({3, 4}), b.param({1})},
           [](const auto& in) { return mul(in[0], in[1]); });
  add_case("div", {b.param({3, 4}), b.param_nonzero({3, 4})},
           [](const auto& in) { return div(in[0], in[1]); });
  add_case("neg_scale_add_scalar", {b.param({6})},
           [](const auto& in) { return add_scalar(scale(neg(in[0]), 2.5), 0.3); });
  add_case("relu", {b.param_nonzero({4, 5})}, [](const auto& in) { return relu(in[0]); });
  add_case("sigmoid", {b.param({4, 5}, -3.0, 3.0)}, [](const auto& in) { return sigmoid(in[0]); });
  add_case("exp", {b.param({7})}, [](const auto& in) { return exp(in[0]); });
  add_case("log", {b.param({7}, 0.2, 3.0)}, [](const auto& in) { return log(in[0]); });
  add_case("abs", {b.param_nonzero({7})}, [](const auto& in) { return abs(in[0]); });
  add_case("sin_cos", {b.param({5}, -3.0, 3.0)},
           [](const auto& in) { return add(sin(in[0]), cos(in[0])); });
  add_case("atan2", {b.param_nonzero({6}), b.param_nonzero({6})},
           [](const auto& in) { return atan2(in[0], in[1]); });
  add_case("wrap_angle", {b.param({5}, 3.3, 6.0)},
           [](const auto& in) { return wrap_angle(in[0]); });
  add_case("reshape_transpose", {b.param({3, 4})},
           [](const auto& in) { return transpose(reshape(in[0], {4, 3})); });
  add_case("concat", {b.param({2, 3}), b.param({2, 2})},
           [](const auto& in) { return concat({in[0], in[1]}, 1); });
  add_case("slice", {b.param({3, 5, 2})}, [](const auto& in) { return slice(in[0], 1, 1, 3); });
  add_case("gather", {b.param({10})},
           [](const auto& in) { return gather(in[0], {3, 3, 0, 9, 5, 1}, {2, 3}); });
  add_case("sum_axis", {b.param({3, 4, 2})}, [](const auto& in) { return sum(in[0], 1); });
  add_case("mean", {b.param({3, 4})},
           [](const auto& in) { return add(mean(in[0], 0), mean(in[0])); });
  add_case("l2_normalize", {b.param({4, 6})},
           [](const auto& in) { return l2_normalize(in[0], 1); });
  add_case("matmul", {b.param({3, 5}), b.param({5, 4})},
           [](const auto& in) { return matmul(in[0], in[1]); });
  add_case("conv2d_pad", {b.param({2, 6, 5}), b.param({3, 2, 3, 3}), b.param({3})},
           [](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); });
  add_case("conv2d_stride", {b.param({2, 7, 7}), b.param({2, 2, 3, 3}), b.param({2})},
           [](const auto& in) { return conv2d(in[0], in[1], in[2], 2, 0); });
  {
    // Distinct values with gaps larger than the finite-difference step.
    std::vector<double> v(2 * 4 * 6);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.05 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), b.rng());
    add_case("max_pool2d", {Tensor::parameter({2, 4, 6}, v)},
             [](const auto& in) { return max_pool2d(in[0], 2); });
  }
  add_case("upsample_nearest", {b.param({2, 3, 4})},
           [](const auto& in) { return upsample(in[0], 2, UpsampleMode::kNearest); });
  add_case("upsample_bilinear", {b.param({2, 3, 4})},
           [](const auto& in) { return upsample(in[0], 4, UpsampleMode::kBilinear); });
  add_case("softmax_temperature", {b.param({3, 5})},
           [](const auto& in) { return softmax_temperature(in[0], 0.7, 1); });
  {
    auto mask = std::make_shared<std::vector<bool>>(
        std::vector<bool>{true, false, true, true, true, true, true, false, false, true, true, true});
    add_case("softmax_temperature_masked", {b.param({4, 3})},
             [mask](const auto& in) { return softmax_temperature(in[0], 0.5, 0, mask.get()); });
  }
  add_case("bilinear_sample", {b.param({3, 5, 6}), b.coords(4, 5, 6)},
           [](const auto& in) { return bilinear_sample(in[0], in[1]); });
  add_case("bilinear_sample_each", {b.param({4, 5, 6}), b.coords(4, 5, 6)},
           [](const auto& in) { return bilinear_sample_each(in[0], in[1]); });
  {
    std::vector<long> targets{0, 5, 5, -1, 11, 2, 5};
    add_case("scatter_add_pool", {b.param({7, 3})}, [targets](const auto& in) {
      return scatter_add_pool(in[0], targets, 3, 4);
    });
  }
  return cases;
}

}  // namespace bevodo
