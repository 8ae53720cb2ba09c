#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "edo/common.hpp"
#include "edo/policy.hpp"
#include "edo/rmodel.hpp"
#include "edo/rng.hpp"

namespace edo {

struct KernelMemoryOptions {
  double noise_var = 0.25;   ///< sigma^2 of the observation noise
  double ridge = 1.0;        ///< prior precision of the linear reward weights
  std::size_t revalidate_every = 64;
  double revalidate_tol = 1e-9;
};

/// Regularized inverse-covariance accumulator A = Phi^T Phi / sigma^2 + ridge I
/// over absorbed embeddings, with A^{-1} maintained by rank-1 updates.
///
/// A is block diagonal between the features any absorbed embedding touched
/// (the support) and the rest, where it stays ridge * I. Only the support block
/// and its inverse are stored, so memory is quadratic in the support size
/// rather than in the ambient dimension.
class KernelMemory {
 public:
  KernelMemory(std::size_t dim, KernelMemoryOptions options = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return count_; }
  const KernelMemoryOptions& options() const noexcept { return options_; }

  /// sigma_t^2(phi) = phi^T A^{-1} phi + sigma^2, from the maintained inverse.
  double posterior_variance(const SparseVec& phi) const;
  double posterior_variance(std::span<const double> phi) const;

  /// Same quantity by a fresh Cholesky solve against A. Throws kKernelDegenerate
  /// if A is not numerically positive definite.
  double posterior_variance_dense_solve(const SparseVec& phi) const;

  /// A <- A + phi phi^T / sigma^2 and the matching Sherman-Morrison update.
  void absorb(const SparseVec& phi);
  void absorb(std::span<const double> phi);

  /// Recomputes the support inverse densely and returns the largest absolute
  /// deviation of the maintained one; replaces it if beyond tolerance.
  double revalidate();

  std::size_t recomputes() const noexcept { return recomputes_; }
  std::size_t support_size() const noexcept { return support_.size(); }

 private:
  struct Split {
    Eigen::VectorXd inside;
    double outside_sq = 0.0;
  };
  Split split(const SparseVec& phi) const;
  void grow_support(const SparseVec& phi);

  std::size_t dim_;
  KernelMemoryOptions options_;
  std::size_t count_ = 0;
  std::size_t since_validation_ = 0;
  std::size_t recomputes_ = 0;
  std::unordered_map<std::uint32_t, Eigen::Index> slot_;
  std::vector<std::uint32_t> support_;
  Eigen::MatrixXd precision_;
  Eigen::MatrixXd inverse_;
};

SparseVec to_sparse(std::span<const double> dense);

/// Node embedding: pooled features of the partial response (zero for the root).
SparseVec node_embedding(std::span<const Token> prompt, std::span<const Token> partial, const FeatureMap& fm);

/// f(n) = r(n) + lambda * sigma_t(n).
double ucb_score(double reward, const SparseVec& embedding, const KernelMemory& memory, double lambda);

/// What the tree search needs from the outside world. The production
/// environment wraps a policy and a reward model; tests supply hand-built trees.
class SearchEnvironment {
 public:
  virtual ~SearchEnvironment() = default;
  /// k i.i.d. next actions for the node whose partial response is given.
  virtual std::vector<Token> propose(std::span<const Token> partial, std::size_t k, RngStream& rng) const = 0;
  virtual double reward(std::span<const Token> partial) const = 0;
  virtual SparseVec embedding(std::span<const Token> partial) const = 0;
  virtual bool terminal(std::span<const Token> partial) const = 0;
  virtual std::size_t embedding_dim() const = 0;
};

class PolicySearchEnvironment final : public SearchEnvironment {
 public:
  PolicySearchEnvironment(const SoftmaxPolicy& policy, const RewardModel& rm, TokenSeq prompt,
                          std::size_t max_depth, Token terminator, double temperature = 1.0);

  std::vector<Token> propose(std::span<const Token> partial, std::size_t k, RngStream& rng) const override;
  double reward(std::span<const Token> partial) const override;
  SparseVec embedding(std::span<const Token> partial) const override;
  bool terminal(std::span<const Token> partial) const override;
  std::size_t embedding_dim() const override { return policy_.dim(); }

 private:
  const SoftmaxPolicy& policy_;
  const RewardModel& rm_;
  TokenSeq prompt_;
  std::size_t max_depth_;
  Token terminator_;
  double temperature_;
};

struct SearchOptions {
  std::size_t beam = 4;            ///< s
  std::size_t branching = 4;       ///< k
  std::size_t max_iterations = 16; ///< T_search
  double lambda = 1.0;
  KernelMemoryOptions memory;
};

struct SearchNode {
  std::size_t id = 0;
  std::optional<std::size_t> parent;
  TokenSeq partial;
  SparseVec embedding;
  double reward = 0.0;
  bool terminal = false;
  std::size_t depth = 0;
};

struct SearchTraceRecord {
  std::size_t iteration = 0;
  std::size_t node_id = 0;
  std::optional<std::size_t> parent_id;
  std::size_t depth = 0;
  double reward = 0.0;
  double sigma = 0.0;
  double score = 0.0;
  bool kept = false;
};

struct SearchResult {
  std::size_t node_id = 0;
  double score = 0.0;
  TokenSeq response;
  std::vector<SearchNode> tree;
  std::vector<SearchTraceRecord> trace;
  /// Kept node ids per iteration, in the order they were kept.
  std::vector<std::vector<std::size_t>> kept_per_iteration;
  std::size_t iterations = 0;
};

/// Frontier-based UCB tree search. Each iteration selects the top-s
/// non-terminal frontier nodes by f (one node on the first iteration),
/// samples k actions per selected node, and keeps s of the children, picking
/// them one at a time by f and absorbing each pick into the memory before the
/// next. Selected nodes leave the frontier; kept children join it. The search
/// stops when every kept node is terminal, returning the first kept node. At
/// the iteration cap it returns the best terminal node on the frontier, or the
/// best node of the last kept set if none terminated. Ties go to the lower node id.
SearchResult tree_search(const SearchEnvironment& env, const SearchOptions& options, RngStream& rng);

/// Convenience wrapper over PolicySearchEnvironment with a fresh memory.
SearchResult search(std::span<const Token> prompt, const SoftmaxPolicy& policy, const RewardModel& rm,
                    const SearchOptions& options, std::size_t max_depth, Token terminator, RngStream& rng);

/// One JSON object per line: iteration, node_id, parent_id, depth, reward, sigma, f, kept.
void write_search_trace(std::ostream& out, std::span<const SearchTraceRecord> trace);

}  // namespace edo
