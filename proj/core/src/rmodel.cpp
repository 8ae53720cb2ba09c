#include "edo/rmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "edo/optimizer.hpp"
#include "edo/rng.hpp"

namespace edo {
namespace {

constexpr std::string_view kRewardModelMagic = "EDORWDMD";
constexpr std::uint32_t kRewardModelFormatVersion = 1;

void add_scaled(const SparseVec& v, double scale, std::vector<double>& dense) {
  for (std::size_t j = 0; j < v.index.size(); ++j) dense[v.index[j]] += scale * v.value[j];
}

}  // namespace

double SparseVec::dot(std::span<const double> dense) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < index.size(); ++j) acc += value[j] * dense[index[j]];
  return acc;
}

std::vector<double> SparseVec::to_dense(std::size_t dim) const {
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < index.size(); ++j) out[index[j]] = value[j];
  return out;
}

SparseVec pooled_features(std::span<const Token> prompt, std::span<const Token> response, const FeatureMap& fm) {
  SparseVec out;
  if (response.empty()) return out;
  std::map<std::uint32_t, double> acc;
  TokenSeq context(prompt.begin(), prompt.end());
  for (Token y : response) {
    context.push_back(y);
    for (auto f : featurize(context, fm)) acc[f] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(response.size());
  for (const auto& [idx, count] : acc) {
    out.index.push_back(idx);
    out.value.push_back(count * inv);
  }
  return out;
}

double rm_score(const RewardModel& rm, std::span<const Token> prompt, std::span<const Token> response) {
  return pooled_features(prompt, response, rm.feature_map).dot(rm.weights);
}

NceValueGrad nce_loss(const RewardModel& rm, std::span<const Token> prompt, std::span<const Token> positive,
                      std::span<const TokenSeq> negatives, double reg) {
  NceValueGrad out{0.0, std::vector<double>(rm.weights.size(), 0.0)};
  std::vector<SparseVec> feats;
  feats.reserve(negatives.size() + 1);
  feats.push_back(pooled_features(prompt, positive, rm.feature_map));
  for (const auto& neg : negatives) feats.push_back(pooled_features(prompt, neg, rm.feature_map));

  std::vector<double> scores(feats.size());
  for (std::size_t k = 0; k < feats.size(); ++k) scores[k] = feats[k].dot(rm.weights);
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  const double lse = mx + std::log(sum);

  out.value = -scores[0] + lse + reg * scores[0] * scores[0];
  add_scaled(feats[0], -1.0 + 2.0 * reg * scores[0], out.grad);
  for (std::size_t k = 0; k < feats.size(); ++k) add_scaled(feats[k], std::exp(scores[k] - lse), out.grad);
  if (!negatives.empty()) {
    const double inv_n = 1.0 / static_cast<double>(negatives.size());
    for (std::size_t k = 1; k < feats.size(); ++k) {
      out.value += reg * inv_n * scores[k] * scores[k];
      add_scaled(feats[k], 2.0 * reg * inv_n * scores[k], out.grad);
    }
  }
  return out;
}

double train_rm(RewardModel& rm, std::span<const RmExample> data, const RmTrainOptions& options) {
  if (data.empty()) throw Error(ErrorCode::kEmptyBatch, "reward model training needs data");
  Adam adam(rm.weights.size(), AdamOptions{options.learning_rate});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::vector<double> grad(rm.weights.size());
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    RngStream rng(options.seed, Stream::kRewardModel, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t j = start; j < stop; ++j) {
        const auto& ex = data[order[j]];
        const auto lg = nce_loss(rm, ex.prompt, ex.positive, ex.negatives, options.reg);
        if (!std::isfinite(lg.value)) throw Error(ErrorCode::kDivergedRun, "non-finite NCE loss");
        epoch_loss += lg.value;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += inv * lg.grad[i];
      }
      adam.step(rm.weights, grad);
    }
    epoch_loss /= static_cast<double>(data.size());
  }
  return epoch_loss;
}

void save_reward_model(const RewardModel& rm, std::ostream& out) {
  const auto& fm = rm.feature_map;
  detail::write_magic(out, kRewardModelMagic);
  detail::write_le<std::uint32_t>(out, kRewardModelFormatVersion);
  detail::write_le<std::uint64_t>(out, fm.vocab_size);
  detail::write_le<std::uint64_t>(out, fm.dim);
  detail::write_le<std::uint64_t>(out, fm.context_window);
  detail::write_le<std::uint32_t>(out, fm.hash_id);
  for (double w : rm.weights) detail::write_le<double>(out, w);
  if (!out) throw Error(ErrorCode::kIo, "failed writing reward model checkpoint");
}

RewardModel load_reward_model(std::istream& in) {
  detail::expect_magic(in, kRewardModelMagic);
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kRewardModelFormatVersion) {
    throw Error(ErrorCode::kIo, "unsupported reward model version " + std::to_string(version));
  }
  FeatureMap fm;
  fm.vocab_size = detail::read_le<std::uint64_t>(in);
  fm.dim = detail::read_le<std::uint64_t>(in);
  fm.context_window = detail::read_le<std::uint64_t>(in);
  fm.hash_id = detail::read_le<std::uint32_t>(in);
  RewardModel rm(fm);
  for (double& w : rm.weights) w = detail::read_le<double>(in);
  return rm;
}

void save_reward_model(const RewardModel& rm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  save_reward_model(rm, out);
}

RewardModel load_reward_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return load_reward_model(in);
}

}  // namespace edo
