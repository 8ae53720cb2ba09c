#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "edo/common.hpp"
#include "edo/policy.hpp"

namespace edo {

/// Sparse real vector with strictly increasing indices.
struct SparseVec {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  bool empty() const noexcept { return index.empty(); }
  double dot(std::span<const double> dense) const;
  std::vector<double> to_dense(std::size_t dim) const;
};

/// Mean of the feature vectors of the states reached after each response
/// token (prompt + y_<=t). Empty responses pool to the zero vector. Entries
/// lie in [0, 1].
SparseVec pooled_features(std::span<const Token> prompt, std::span<const Token> response, const FeatureMap& fm);

struct RewardModel {
  FeatureMap feature_map;
  std::vector<double> weights;  ///< dim d

  explicit RewardModel(FeatureMap fm) : feature_map(fm), weights(fm.dim, 0.0) {}
};

double rm_score(const RewardModel& rm, std::span<const Token> prompt, std::span<const Token> response);

struct NceValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Ranking NCE over the candidate set {positive} u negatives:
///   -r(y+) + log sum_k exp r(y_k) + reg * (r(y+)^2 + mean_neg r(y-)^2).
NceValueGrad nce_loss(const RewardModel& rm, std::span<const Token> prompt, std::span<const Token> positive,
                      std::span<const TokenSeq> negatives, double reg);

struct RmExample {
  TokenSeq prompt;
  TokenSeq positive;
  std::vector<TokenSeq> negatives;
};

struct RmTrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 5e-2;
  double reg = 0.01;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

/// Adam on the mean NCE loss over shuffled minibatches. Returns the final
/// epoch's mean loss.
double train_rm(RewardModel& rm, std::span<const RmExample> data, const RmTrainOptions& options);

void save_reward_model(const RewardModel& rm, std::ostream& out);
RewardModel load_reward_model(std::istream& in);
void save_reward_model(const RewardModel& rm, const std::string& path);
RewardModel load_reward_model(const std::string& path);

}  // namespace edo
