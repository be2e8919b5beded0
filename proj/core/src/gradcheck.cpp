#include "tristream/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace tristream {

GradCheckResult gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& scalar_fn,
    std::vector<Tensor> inputs, double tolerance, double h) {
  GradCheckResult result;

  for (Tensor& in : inputs) {
    in.set_requires_grad(true);
    in.mut_grad();
    in.zero_grad();
  }
  Tensor loss = scalar_fn(inputs);
  if (loss.numel() != 1)
    throw ShapeError("gradcheck: function must return a scalar");
  loss.backward();

  std::vector<std::vector<float>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& in : inputs)
    analytic.emplace_back(in.grad().begin(), in.grad().end());

  NoGradGuard no_grad;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mut_data();
    for (size_t e = 0; e < data.size(); ++e) {
      const float orig = data[e];
      data[e] = static_cast<float>(orig + h);
      const double f_plus = scalar_fn(inputs).item();
      data[e] = static_cast<float>(orig - h);
      const double f_minus = scalar_fn(inputs).item();
      data[e] = orig;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[k][e];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > result.max_rel_err) result.max_rel_err = rel;
      if (rel > tolerance && result.passed) {
        result.passed = false;
        std::ostringstream os;
        os << "input " << k << " element " << e << ": analytic " << a
           << " vs numeric " << numeric << " (rel " << rel << ")";
        result.detail = os.str();
      }
    }
  }
  return result;
}

}  // namespace tristream
