#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "srclpm/errors.hpp"

namespace srclpm {

/// 2-D grid of intensities in [0,1], row-major. The unit of ingestion,
/// corruption and block extraction.
class SonarImage {
 public:
  SonarImage(int height, int width, std::vector<double> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  double at(int row, int col) const { return pixels_[row * width_ + col]; }
  const std::vector<double>& pixels() const { return pixels_; }

 private:
  int height_;
  int width_;
  std::vector<double> pixels_;
};

/// Block dimensions (m rows by n columns).
struct BlockShape {
  int m = 1;
  int n = 1;

  bool operator==(const BlockShape&) const = default;
};

/// An m-by-n sub-image with its origin in the source image and an optional
/// inherited class label.
struct Block {
  BlockShape shape;
  int row = 0;
  int col = 0;
  std::vector<double> pixels;  // row-major, shape.m * shape.n values
  std::optional<int> label;
};

/// A vectorized block: row-major flatten, optionally l2-normalized.
struct BlockVector {
  Eigen::VectorXd values;
  bool norm_applied = false;
};

/// Parses a binary ("P5") or ASCII ("P2") PGM, scaling intensities by the
/// declared maxval into [0,1]. Comment lines are accepted in the header.
SonarImage load_pgm(const std::vector<std::uint8_t>& bytes);

/// Serializes as binary PGM with maxval 255. Round-tripping through load_pgm
/// reproduces every pixel within 1/510 (quantization half-step).
std::vector<std::uint8_t> save_pgm(const SonarImage& image);

/// Copies the sub-grid at (row, col) of the given shape. The label is unset.
Block extract_block(const SonarImage& image, int row, int col, BlockShape shape);

/// Draws `count` blocks with origins uniform over all valid positions, with
/// replacement, reproducible for a fixed seed.
std::vector<Block> sample_blocks(const SonarImage& image, int count,
                                 BlockShape shape, std::uint64_t seed);

/// Blocks at every origin (i*stride_r, j*stride_c) that fits, row-major order.
std::vector<Block> grid_blocks(const SonarImage& image, BlockShape shape,
                               int stride_r, int stride_c);

/// Row-major flatten followed by l2 normalization. All-zero blocks are
/// rejected (normalization is undefined); callers should resample.
BlockVector vectorize(const Block& block);

/// Corrupts each pixel independently with probability `density`; corrupted
/// pixels become 0 or 1 with equal probability. Deterministic per seed.
SonarImage add_salt_pepper(const SonarImage& image, double density,
                           std::uint64_t seed);

}  // namespace srclpm
