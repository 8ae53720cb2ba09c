#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace edo {

struct AdamOptions {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment descent over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n_params, AdamOptions options);

  /// One descent step. Throws kDivergedRun if any gradient entry is non-finite;
  /// parameters are left untouched in that case.
  void step(std::span<double> params, std::span<const double> grad);

  std::uint64_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace edo
