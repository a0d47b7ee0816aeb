#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "srclpm/image.hpp"
#include "srclpm/solver.hpp"

namespace srclpm {

/// Class-labeled dictionary D = (D_1 D_2 ... D_K): unit-norm columns grouped
/// contiguously by class. Immutable after construction; the Gram matrix and
/// its spectral bound are precomputed so repeated solves against the same
/// dictionary are cheap.
class LabeledDictionary {
 public:
  LabeledDictionary(Eigen::MatrixXd columns, std::vector<int> labels,
                    int num_classes, BlockShape block_shape);

  const Eigen::MatrixXd& columns() const { return columns_; }
  const std::vector<int>& labels() const { return labels_; }
  int num_classes() const { return num_classes_; }
  BlockShape block_shape() const { return block_shape_; }
  Eigen::Index rows() const { return columns_.rows(); }
  Eigen::Index size() const { return columns_.cols(); }

  /// Half-open column range [first, last) owned by class k.
  std::pair<int, int> class_range(int k) const;

  /// D'D and an upper bound on its largest eigenvalue, shared by solvers.
  const Eigen::MatrixXd& gram() const { return gram_; }
  double gram_spectral_bound() const { return spectral_bound_; }

 private:
  Eigen::MatrixXd columns_;
  std::vector<int> labels_;
  int num_classes_;
  BlockShape block_shape_;
  std::vector<int> class_offsets_;  // size num_classes_+1
  Eigen::MatrixXd gram_;
  double spectral_bound_;
};

/// Settings for per-class online dictionary learning.
struct OdlConfig {
  int atoms_per_class = 8;
  double lambda = 0.1;
  int epochs = 5;
  std::uint64_t seed = 0;
  int batch_size = 1;  // 1 = pure online
};

/// Sufficient statistics of the online dictionary learning surrogate, plus
/// the working dictionary being refined.
struct OdlState {
  Eigen::MatrixXd memory_a;  // atoms x atoms, accumulates alpha*alpha'
  Eigen::MatrixXd memory_b;  // dim x atoms, accumulates x*alpha'
  Eigen::MatrixXd atoms;     // dim x atoms working dictionary
};

/// Builds the concatenated dictionary directly from labeled blocks: one
/// column per block, vectorized and normalized, grouped by class in class
/// order.
LabeledDictionary build_concatenated(
    const std::vector<std::vector<Block>>& blocks_by_class);

/// Chooses `count` distinct samples uniformly without replacement (seeded)
/// as initial atom columns.
Eigen::MatrixXd init_atoms(const std::vector<BlockVector>& samples, int count,
                           std::uint64_t seed);

/// Zero-statistics state around the given initial atoms.
OdlState make_odl_state(Eigen::MatrixXd initial_atoms);

/// One online step: sparse-code the sample against the working atoms,
/// accumulate the sufficient statistics, then sweep the atoms with the
/// block-coordinate update u_j = (b_j - D a_j)/A_jj + d_j, d_j = u_j /
/// max(||u_j||, 1). Atoms whose A_jj is below 1e-10 are left unchanged.
OdlState odl_step(OdlState state, const Eigen::VectorXd& sample, double lambda,
                  const SolverConfig& solver = SolverConfig{});

/// Mini-batch variant of odl_step: codes every column of `samples` against
/// the same working atoms, accumulates them all, then sweeps once.
OdlState odl_step_batch(OdlState state, const Eigen::MatrixXd& samples,
                        double lambda, const SolverConfig& solver = SolverConfig{});

/// Surrogate objective 0.5*tr(D'D A) - tr(D'B) tracked by the sufficient
/// statistics; each atom sweep is a coordinate-descent pass on it.
double odl_surrogate(const OdlState& state);

/// Condenses each class of blocks to `atoms_per_class` learned atoms:
/// init_atoms, then epochs passes of shuffled odl steps, renormalizing atoms
/// to exact unit norm at every epoch end. Classes are processed independently
/// and concatenated in order.
LabeledDictionary learn_odl(const std::vector<std::vector<Block>>& blocks_by_class,
                            const OdlConfig& odl, const SolverConfig& solver);

/// Flat binary container: magic "SRCD", little-endian 32-bit header fields
/// (version, rows, cols, K, block m, block n), labels as 32-bit values, then
/// column-major 64-bit floats. Loading validates every dictionary invariant.
std::vector<std::uint8_t> serialize_dictionary(const LabeledDictionary& dict);
LabeledDictionary deserialize_dictionary(const std::vector<std::uint8_t>& bytes);

void save_dictionary(const LabeledDictionary& dict, const std::string& path);
LabeledDictionary load_dictionary(const std::string& path);

}  // namespace srclpm
