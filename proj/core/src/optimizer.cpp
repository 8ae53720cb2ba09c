#include "edo/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "edo/common.hpp"

namespace edo {

Adam::Adam(std::size_t n_params, AdamOptions options)
    : options_(options), first_(n_params, 0.0), second_(n_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != first_.size() || grad.size() != first_.size()) {
    throw Error(ErrorCode::kInvalidInput, "optimizer shape mismatch");
  }
  if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
    throw Error(ErrorCode::kDivergedRun, "non-finite gradient");
  }
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    // Untouched coordinates with no history stay exactly where they are.
    if (g == 0.0 && first_[i] == 0.0 && second_[i] == 0.0) continue;
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g * g;
    const double m_hat = first_[i] / c1;
    const double v_hat = second_[i] / c2;
    params[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  }
}

}  // namespace edo
