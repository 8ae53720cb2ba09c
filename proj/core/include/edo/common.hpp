#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace edo {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

enum class ErrorCode {
  kInvalidToken,
  kInvalidSpec,
  kInvalidConfig,
  kEmptyBatch,
  kGroupTooSmall,
  kInvalidGroup,
  kDivergedRun,
  kKernelDegenerate,
  kSearchExhausted,
  kInsufficientTokens,
  kInvalidInput,
  kMissingDependency,
  kIo,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Dense row-major matrix used for policy parameters and their gradients.
class ParamMatrix {
 public:
  ParamMatrix() = default;
  ParamMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const ParamMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void set_zero();
  void add_scaled(const ParamMatrix& other, double scale);
  bool all_finite() const;

  friend bool operator==(const ParamMatrix&, const ParamMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace edo
