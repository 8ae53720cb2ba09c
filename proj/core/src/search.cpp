#include "edo/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace edo {

KernelMemory::KernelMemory(std::size_t dim, KernelMemoryOptions options) : dim_(dim), options_(options) {
  if (!(options_.ridge > 0.0) || !(options_.noise_var > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "kernel memory needs ridge > 0 and noise variance > 0");
  }
}

KernelMemory::Split KernelMemory::split(const SparseVec& phi) const {
  Split out;
  out.inside = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(support_.size()));
  for (std::size_t j = 0; j < phi.index.size(); ++j) {
    const auto it = slot_.find(phi.index[j]);
    if (it == slot_.end()) {
      out.outside_sq += phi.value[j] * phi.value[j];
    } else {
      out.inside[it->second] = phi.value[j];
    }
  }
  return out;
}

double KernelMemory::posterior_variance(const SparseVec& phi) const {
  const Split s = split(phi);
  const double quad = s.inside.size() ? s.inside.dot(inverse_ * s.inside) : 0.0;
  return quad + s.outside_sq / options_.ridge + options_.noise_var;
}

double KernelMemory::posterior_variance(std::span<const double> phi) const {
  return posterior_variance(to_sparse(phi));
}

double KernelMemory::posterior_variance_dense_solve(const SparseVec& phi) const {
  const Split s = split(phi);
  double quad = 0.0;
  if (s.inside.size()) {
    Eigen::LLT<Eigen::MatrixXd> llt(precision_);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::kKernelDegenerate, "precision matrix not PD");
    quad = s.inside.dot(llt.solve(s.inside));
  }
  return quad + s.outside_sq / options_.ridge + options_.noise_var;
}

void KernelMemory::grow_support(const SparseVec& phi) {
  const auto old_n = static_cast<Eigen::Index>(support_.size());
  for (auto idx : phi.index) {
    if (idx >= dim_) throw Error(ErrorCode::kInvalidInput, "embedding index outside memory dimension");
    if (slot_.emplace(idx, static_cast<Eigen::Index>(support_.size())).second) support_.push_back(idx);
  }
  const auto n = static_cast<Eigen::Index>(support_.size());
  if (n == old_n) return;
  precision_.conservativeResize(n, n);
  inverse_.conservativeResize(n, n);
  precision_.bottomRows(n - old_n).setZero();
  precision_.rightCols(n - old_n).setZero();
  inverse_.bottomRows(n - old_n).setZero();
  inverse_.rightCols(n - old_n).setZero();
  for (Eigen::Index i = old_n; i < n; ++i) {
    precision_(i, i) = options_.ridge;
    inverse_(i, i) = 1.0 / options_.ridge;
  }
}

void KernelMemory::absorb(const SparseVec& phi) {
  for (double v : phi.value) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidInput, "non-finite embedding");
  }
  ++count_;
  SparseVec nz;
  for (std::size_t j = 0; j < phi.index.size(); ++j) {
    if (phi.value[j] != 0.0) {
      nz.index.push_back(phi.index[j]);
      nz.value.push_back(phi.value[j]);
    }
  }
  if (nz.empty()) return;
  grow_support(nz);
  const Eigen::VectorXd x = split(nz).inside;
  const Eigen::VectorXd u = inverse_ * x;
  const double denom = options_.noise_var + x.dot(u);
  if (!(denom > 0.0)) throw Error(ErrorCode::kKernelDegenerate, "rank-1 update lost positive definiteness");
  inverse_.noalias() -= (u * u.transpose()) / denom;
  precision_.noalias() += (x * x.transpose()) / options_.noise_var;
  if (++since_validation_ >= options_.revalidate_every) revalidate();
}

void KernelMemory::absorb(std::span<const double> phi) {
  if (phi.size() != dim_) throw Error(ErrorCode::kInvalidInput, "embedding dimension mismatch");
  absorb(to_sparse(phi));
}

double KernelMemory::revalidate() {
  since_validation_ = 0;
  if (support_.empty()) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(precision_);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kKernelDegenerate, "precision matrix not PD");
  const auto n = static_cast<Eigen::Index>(support_.size());
  const Eigen::MatrixXd dense = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double deviation = (dense - inverse_).cwiseAbs().maxCoeff();
  if (deviation > options_.revalidate_tol * std::max(1.0, dense.cwiseAbs().maxCoeff())) {
    inverse_ = dense;
    ++recomputes_;
  }
  return deviation;
}

SparseVec to_sparse(std::span<const double> dense) {
  SparseVec out;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) {
      out.index.push_back(static_cast<std::uint32_t>(i));
      out.value.push_back(dense[i]);
    }
  }
  return out;
}

SparseVec node_embedding(std::span<const Token> prompt, std::span<const Token> partial, const FeatureMap& fm) {
  return pooled_features(prompt, partial, fm);
}

double ucb_score(double reward, const SparseVec& embedding, const KernelMemory& memory, double lambda) {
  if (lambda == 0.0) return reward;
  return reward + lambda * std::sqrt(memory.posterior_variance(embedding));
}

PolicySearchEnvironment::PolicySearchEnvironment(const SoftmaxPolicy& policy, const RewardModel& rm, TokenSeq prompt,
                                                 std::size_t max_depth, Token terminator, double temperature)
    : policy_(policy),
      rm_(rm),
      prompt_(std::move(prompt)),
      max_depth_(max_depth),
      terminator_(terminator),
      temperature_(temperature) {}

std::vector<Token> PolicySearchEnvironment::propose(std::span<const Token> partial, std::size_t k,
                                                    RngStream& rng) const {
  TokenSeq context = prompt_;
  context.insert(context.end(), partial.begin(), partial.end());
  const auto lp = action_logprobs(policy_, context, temperature_);
  std::vector<Token> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double u = rng.uniform();
    double cdf = 0.0;
    Token chosen = static_cast<Token>(lp.size() - 1);
    for (std::size_t a = 0; a < lp.size(); ++a) {
      cdf += std::exp(lp[a]);
      if (u < cdf) {
        chosen = static_cast<Token>(a);
        break;
      }
    }
    out.push_back(chosen);
  }
  return out;
}

double PolicySearchEnvironment::reward(std::span<const Token> partial) const {
  return rm_score(rm_, prompt_, partial);
}

SparseVec PolicySearchEnvironment::embedding(std::span<const Token> partial) const {
  return node_embedding(prompt_, partial, policy_.feature_map());
}

bool PolicySearchEnvironment::terminal(std::span<const Token> partial) const {
  return partial.size() >= max_depth_ || (!partial.empty() && partial.back() == terminator_);
}

namespace {

struct Scored {
  std::size_t id;
  double score;
};

// Highest score first, lower id on ties.
bool better(const Scored& a, const Scored& b) { return a.score > b.score || (a.score == b.score && a.id < b.id); }

}  // namespace

SearchResult tree_search(const SearchEnvironment& env, const SearchOptions& options, RngStream& rng) {
  if (options.beam == 0 || options.branching == 0) {
    throw Error(ErrorCode::kInvalidConfig, "search needs beam >= 1 and branching >= 1");
  }
  SearchResult result;
  KernelMemory memory(env.embedding_dim(), options.memory);
  auto& tree = result.tree;
  auto score_of = [&](std::size_t id) { return ucb_score(tree[id].reward, tree[id].embedding, memory, options.lambda); };
  auto sigma_of = [&](std::size_t id) { return std::sqrt(memory.posterior_variance(tree[id].embedding)); };

  SearchNode root;
  root.embedding = env.embedding(root.partial);
  root.reward = env.reward(root.partial);
  root.terminal = env.terminal(root.partial);
  tree.push_back(root);
  std::vector<std::size_t> frontier{0};
  std::vector<std::size_t> last_kept;

  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    std::vector<Scored> open;
    for (auto id : frontier) {
      if (!tree[id].terminal) open.push_back({id, score_of(id)});
    }
    if (open.empty()) break;
    std::sort(open.begin(), open.end(), better);
    const std::size_t n_select = std::min(open.size(), it == 1 ? std::size_t{1} : options.beam);
    result.iterations = it;

    std::vector<std::size_t> children;
    for (std::size_t j = 0; j < n_select; ++j) {
      const std::size_t parent = open[j].id;
      std::erase(frontier, parent);
      const auto actions = env.propose(tree[parent].partial, options.branching, rng);
      for (Token a : actions) {
        SearchNode child;
        child.id = tree.size();
        child.parent = parent;
        child.partial = tree[parent].partial;
        child.partial.push_back(a);
        child.depth = tree[parent].depth + 1;
        child.embedding = env.embedding(child.partial);
        child.reward = env.reward(child.partial);
        child.terminal = env.terminal(child.partial);
        children.push_back(child.id);
        tree.push_back(std::move(child));
      }
    }

    std::vector<std::size_t> kept;
    std::vector<double> kept_score;
    std::vector<std::size_t> pending = children;
    std::vector<Scored> last_round;
    while (kept.size() < options.beam && !pending.empty()) {
      last_round.clear();
      for (auto id : pending) last_round.push_back({id, score_of(id)});
      const auto best = *std::min_element(last_round.begin(), last_round.end(), better);
      result.trace.push_back({it, best.id, tree[best.id].parent, tree[best.id].depth, tree[best.id].reward,
                              sigma_of(best.id), best.score, true});
      kept.push_back(best.id);
      kept_score.push_back(best.score);
      std::erase(pending, best.id);
      memory.absorb(tree[best.id].embedding);
    }
    for (auto id : pending) {
      result.trace.push_back({it, id, tree[id].parent, tree[id].depth, tree[id].reward, sigma_of(id), score_of(id),
                              false});
    }
    frontier.insert(frontier.end(), kept.begin(), kept.end());
    result.kept_per_iteration.push_back(kept);
    last_kept = kept;

    const bool all_terminal = std::all_of(kept.begin(), kept.end(), [&](auto id) { return tree[id].terminal; });
    if (!kept.empty() && all_terminal) {
      result.node_id = kept.front();
      result.score = kept_score.front();
      result.response = tree[kept.front()].partial;
      return result;
    }
  }

  std::vector<Scored> terminals;
  for (auto id : frontier) {
    if (tree[id].terminal) terminals.push_back({id, score_of(id)});
  }
  if (!terminals.empty()) {
    const auto best = *std::min_element(terminals.begin(), terminals.end(), better);
    result.node_id = best.id;
    result.score = best.score;
  } else if (!last_kept.empty()) {
    std::vector<Scored> ranked;
    for (auto id : last_kept) ranked.push_back({id, score_of(id)});
    const auto best = *std::min_element(ranked.begin(), ranked.end(), better);
    result.node_id = best.id;
    result.score = best.score;
  } else {
    throw Error(ErrorCode::kSearchExhausted, "frontier emptied before any node was kept");
  }
  result.response = tree[result.node_id].partial;
  return result;
}

SearchResult search(std::span<const Token> prompt, const SoftmaxPolicy& policy, const RewardModel& rm,
                    const SearchOptions& options, std::size_t max_depth, Token terminator, RngStream& rng) {
  PolicySearchEnvironment env(policy, rm, TokenSeq(prompt.begin(), prompt.end()), max_depth, terminator);
  return tree_search(env, options, rng);
}

void write_search_trace(std::ostream& out, std::span<const SearchTraceRecord> trace) {
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["node_id"] = r.node_id;
    j["parent_id"] = r.parent_id ? nlohmann::json(*r.parent_id) : nlohmann::json(nullptr);
    j["depth"] = r.depth;
    j["reward"] = r.reward;
    j["sigma"] = r.sigma;
    j["f"] = r.score;
    j["kept"] = r.kept;
    out << j.dump() << '\n';
  }
}

}  // namespace edo
