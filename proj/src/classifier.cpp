#include "srclpm/classifier.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "srclpm/rng.hpp"

namespace srclpm {

namespace {

constexpr double kResidualFloor = 1e-9;

int argmax_smallest_tie(const Eigen::VectorXd& v) {
  int best = 0;
  for (int k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace

Eigen::VectorXd delta_k(const Eigen::VectorXd& beta,
                        const std::vector<int>& labels, int k) {
  if (static_cast<Eigen::Index>(labels.size()) != beta.size()) {
    throw ShapeError("delta_k: " + std::to_string(labels.size()) +
                     " labels for beta of length " + std::to_string(beta.size()));
  }
  const int max_label =
      labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
  if (k < 0 || k > max_label) {
    throw ParameterError("delta_k: class " + std::to_string(k) +
                         " outside [0," + std::to_string(max_label + 1) + ")");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (labels[j] == k) out[j] = beta[j];
  }
  return out;
}

ResidualScores class_residuals(const LabeledDictionary& dict,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta) {
  if (y.size() != dict.rows() || beta.size() != dict.size()) {
    throw ShapeError("class_residuals: dictionary " + std::to_string(dict.rows()) +
                     "x" + std::to_string(dict.size()) + " incompatible with y(" +
                     std::to_string(y.size()) + "), beta(" +
                     std::to_string(beta.size()) + ")");
  }
  const int num_classes = dict.num_classes();
  ResidualScores scores;
  scores.r.resize(num_classes);
  Eigen::VectorXd resid(y.size());
  for (int k = 0; k < num_classes; ++k) {
    resid = y;
    const auto [first, last] = dict.class_range(k);
    for (int j = first; j < last; ++j) {
      if (beta[j] != 0.0) resid.noalias() -= beta[j] * dict.columns().col(j);
    }
    scores.r[k] = 1.0 / std::max(resid.norm(), kResidualFloor);
  }
  return scores;
}

BlockPosterior block_posterior(const ResidualScores& scores) {
  BlockPosterior post;
  post.p = scores.r / scores.r.sum();
  return post;
}

std::pair<int, Eigen::VectorXd> fuse_ml(
    const std::vector<BlockPosterior>& posteriors) {
  if (posteriors.empty()) {
    throw ParameterError("fuse_ml: no posteriors to fuse");
  }
  const Eigen::Index num_classes = posteriors.front().p.size();
  Eigen::VectorXd log_scores = Eigen::VectorXd::Zero(num_classes);
  for (const BlockPosterior& post : posteriors) {
    if (post.p.size() != num_classes) {
      throw ShapeError("fuse_ml: posterior lengths differ");
    }
    log_scores += post.p.array().log().matrix();
  }
  return {argmax_smallest_tie(log_scores), log_scores};
}

int fuse_majority(const std::vector<BlockPosterior>& posteriors) {
  if (posteriors.empty()) {
    throw ParameterError("fuse_majority: no posteriors to fuse");
  }
  const Eigen::Index num_classes = posteriors.front().p.size();
  std::vector<int> votes(num_classes, 0);
  for (const BlockPosterior& post : posteriors) {
    if (post.p.size() != num_classes) {
      throw ShapeError("fuse_majority: posterior lengths differ");
    }
    ++votes[argmax_smallest_tie(post.p)];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                          votes.begin());
}

std::pair<int, ResidualScores> classify_global(const LabeledDictionary& dict,
                                               const SonarImage& image,
                                               const SolverConfig& solver) {
  if (image.height() != dict.block_shape().m ||
      image.width() != dict.block_shape().n) {
    throw ShapeError("classify_global: image " + std::to_string(image.height()) +
                     "x" + std::to_string(image.width()) +
                     " does not match dictionary signal shape " +
                     std::to_string(dict.block_shape().m) + "x" +
                     std::to_string(dict.block_shape().n));
  }
  const Block whole = extract_block(image, 0, 0, dict.block_shape());
  const Eigen::VectorXd y = vectorize(whole).values;
  const SparseCode code = solve_l1(dict.columns(), y, solver);
  ResidualScores scores = class_residuals(dict, y, code.beta);
  return {argmax_smallest_tie(scores.r), std::move(scores)};
}

LpmDecision classify_lpm(const LabeledDictionary& dict, const SonarImage& image,
                         int block_count, const SolverConfig& solver,
                         FusionRule fusion, std::uint64_t seed) {
  if (block_count < 1) {
    throw ParameterError("classify_lpm: block count must be >= 1");
  }
  detail::validate_solver_config(solver);
  const BlockShape shape = dict.block_shape();
  if (shape.m > image.height() || shape.n > image.width()) {
    throw BoundsError("classify_lpm: " + std::to_string(shape.m) + "x" +
                      std::to_string(shape.n) + " blocks do not fit in " +
                      std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " image");
  }

  // Draw blocks, skipping degenerate (all-zero) ones; they cannot be
  // normalized, so they are resampled up to a 10x attempt budget.
  SplitMix64 rng(seed);
  const std::uint64_t row_range = image.height() - shape.m + 1;
  const std::uint64_t col_range = image.width() - shape.n + 1;
  std::vector<Block> blocks;
  blocks.reserve(block_count);
  const long max_attempts = 10L * block_count;
  for (long attempt = 0;
       attempt < max_attempts &&
       blocks.size() < static_cast<std::size_t>(block_count);
       ++attempt) {
    const int r = static_cast<int>(rng.next_below(row_range));
    const int c = static_cast<int>(rng.next_below(col_range));
    Block block = extract_block(image, r, c, shape);
    const bool all_zero = std::all_of(block.pixels.begin(), block.pixels.end(),
                                      [](double v) { return v == 0.0; });
    if (all_zero) continue;
    blocks.push_back(std::move(block));
  }
  if (blocks.empty()) {
    throw DegenerateBlockError(
        "classify_lpm: every sampled block was all-zero");
  }

  const int used = static_cast<int>(blocks.size());
  Eigen::MatrixXd signals(dict.rows(), used);
  for (int i = 0; i < used; ++i) {
    signals.col(i) = vectorize(blocks[i]).values;
  }

  std::vector<SparseCode> codes;
  if (solver.epsilon) {
    codes.reserve(used);
    for (int i = 0; i < used; ++i) {
      codes.push_back(solve_l1(dict.columns(), signals.col(i), solver));
    }
  } else {
    // All blocks share the dictionary's precomputed Gram matrix; solving
    // them in one batch is identical to per-block solve_l1 calls.
    Eigen::MatrixXd c(dict.size(), used);
    c.noalias() = dict.columns().transpose() * signals;
    codes = detail::fista_gram(dict.gram(), c, signals.colwise().squaredNorm(),
                               dict.gram_spectral_bound(), solver.lambda,
                               solver.max_iters, solver.tol, solver.kkt_tol);
  }

  LpmDecision decision;
  decision.fusion = fusion;
  decision.num_blocks = used;
  decision.per_block.reserve(used);
  std::vector<BlockPosterior> posteriors;
  posteriors.reserve(used);
  for (int i = 0; i < used; ++i) {
    BlockEvidence ev;
    ev.row = blocks[i].row;
    ev.col = blocks[i].col;
    ev.iterations = codes[i].iterations;
    ev.converged = codes[i].converged;
    ev.posterior =
        block_posterior(class_residuals(dict, signals.col(i), codes[i].beta));
    posteriors.push_back(ev.posterior);
    decision.per_block.push_back(std::move(ev));
  }

  auto [ml_class, log_scores] = fuse_ml(posteriors);
  decision.log_scores = std::move(log_scores);
  decision.predicted = fusion == FusionRule::kMaxLikelihood
                           ? ml_class
                           : fuse_majority(posteriors);
  return decision;
}

std::string decision_to_json(const LpmDecision& decision) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockEvidence& ev : decision.per_block) {
    nlohmann::json p = nlohmann::json::array();
    for (Eigen::Index k = 0; k < ev.posterior.p.size(); ++k) {
      p.push_back(ev.posterior.p[k]);
    }
    blocks.push_back({{"origin", {ev.row, ev.col}},
                      {"p", std::move(p)},
                      {"iterations", ev.iterations},
                      {"converged", ev.converged}});
  }
  nlohmann::json scores = nlohmann::json::array();
  for (Eigen::Index k = 0; k < decision.log_scores.size(); ++k) {
    scores.push_back(decision.log_scores[k]);
  }
  const nlohmann::json doc = {
      {"predicted", decision.predicted},
      {"fusion", decision.fusion == FusionRule::kMaxLikelihood ? "ml" : "majority"},
      {"log_scores", std::move(scores)},
      {"blocks", std::move(blocks)},
  };
  return doc.dump();
}

}  // namespace srclpm
