#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "srclpm/dictionary.hpp"
#include "srclpm/image.hpp"
#include "srclpm/solver.hpp"

namespace srclpm {

/// Per-class scores r_k = 1 / ||y - D delta_k(beta)|| for one block. Entries
/// are finite and positive (residuals are floored at 1e-9).
struct ResidualScores {
  Eigen::VectorXd r;
};

/// Per-class block membership probabilities p_k = r_k / sum(r).
struct BlockPosterior {
  Eigen::VectorXd p;
};

enum class FusionRule {
  kMaxLikelihood,  // argmax_k sum_i ln p_i^k
  kMajorityVote,   // modal per-block argmax
};

/// Evidence retained for one scored block.
struct BlockEvidence {
  int row = 0;
  int col = 0;
  BlockPosterior posterior;
  int iterations = 0;
  bool converged = false;
};

/// Outcome of block-fused classification of one image.
struct LpmDecision {
  int predicted = 0;
  Eigen::VectorXd log_scores;  // sum_i ln p_i^k per class
  std::vector<BlockEvidence> per_block;
  FusionRule fusion = FusionRule::kMaxLikelihood;
  int num_blocks = 0;
};

/// Keeps beta's entries for class k, zeroes everything else.
Eigen::VectorXd delta_k(const Eigen::VectorXd& beta,
                        const std::vector<int>& labels, int k);

/// Reciprocal per-class reconstruction residuals of y under beta.
ResidualScores class_residuals(const LabeledDictionary& dict,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& beta);

/// Normalizes residual scores into probabilities; order-preserving.
BlockPosterior block_posterior(const ResidualScores& scores);

/// Maximum-likelihood fusion: per-class summed log posteriors, argmax with
/// ties broken toward the smallest class index.
std::pair<int, Eigen::VectorXd> fuse_ml(
    const std::vector<BlockPosterior>& posteriors);

/// Majority vote over per-block argmax classes, ties toward the smallest
/// class index (both in the modal count and within a block).
int fuse_majority(const std::vector<BlockPosterior>& posteriors);

/// Whole-image sparse-reconstruction classification: vectorizes the image,
/// codes it against the dictionary, picks the class with the best score.
/// The image dimensions must equal the dictionary's block shape.
std::pair<int, ResidualScores> classify_global(const LabeledDictionary& dict,
                                               const SonarImage& image,
                                               const SolverConfig& solver);

/// Block-fused classification: samples `block_count` blocks (seeded,
/// resampling degenerate ones up to 10x attempts), scores each against the
/// dictionary, and fuses the per-block posteriors under `fusion`.
LpmDecision classify_lpm(const LabeledDictionary& dict, const SonarImage& image,
                         int block_count, const SolverConfig& solver,
                         FusionRule fusion, std::uint64_t seed);

/// JSON serialization of a decision: {predicted, fusion, log_scores,
/// blocks:[{origin, p, iterations, converged}]}.
std::string decision_to_json(const LpmDecision& decision);

}  // namespace srclpm
