#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edo {

struct GradcheckOptions {
  std::size_t instances = 20;  ///< randomized instances per loss
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_vocab = 12;
  std::size_t max_dim = 40;
  std::size_t max_len = 8;
  std::size_t max_group = 6;
  /// Negative control: adds this to one analytic gradient entry per instance.
  double corrupt = 0.0;
};

struct GradcheckResult {
  std::string loss;
  std::size_t instance = 0;
  double rel_error = 0.0;  ///< ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||, 1e-8)
  bool passed = false;
};

/// The loss names exercised, in report order.
const std::vector<std::string>& gradcheck_losses();

/// Central-difference comparison for every loss on randomized instances.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options);

}  // namespace edo
