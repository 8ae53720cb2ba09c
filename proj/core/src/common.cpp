#include "edo/common.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace edo {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidToken: return "InvalidToken";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kInvalidGroup: return "InvalidGroup";
    case ErrorCode::kDivergedRun: return "DivergedRun";
    case ErrorCode::kKernelDegenerate: return "KernelDegenerate";
    case ErrorCode::kSearchExhausted: return "SearchExhausted";
    case ErrorCode::kInsufficientTokens: return "InsufficientTokens";
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kMissingDependency: return "MissingDependency";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

void ParamMatrix::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void ParamMatrix::add_scaled(const ParamMatrix& other, double scale) {
  assert(same_shape(other));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

bool ParamMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace edo
