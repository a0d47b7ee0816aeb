#include "srclpm/image.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>

#include "srclpm/rng.hpp"

namespace srclpm {

SonarImage::SonarImage(int height, int width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height_ < 1 || width_ < 1) {
    throw ParameterError("SonarImage: dimensions must be >= 1, got " +
                         std::to_string(height_) + "x" + std::to_string(width_));
  }
  if (pixels_.size() != static_cast<std::size_t>(height_) * width_) {
    throw ShapeError("SonarImage: pixel count " + std::to_string(pixels_.size()) +
                     " does not match " + std::to_string(height_) + "x" +
                     std::to_string(width_));
  }
  for (double v : pixels_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParameterError("SonarImage: intensity " + std::to_string(v) +
                           " outside [0,1]");
    }
  }
}

namespace {

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[pos])) &&
         bytes[pos] != '#') {
    tok.push_back(static_cast<char>(bytes[pos]));
    ++pos;
  }
  return tok;
}

int parse_header_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos,
                     const char* field) {
  const std::string tok = next_token(bytes, pos);
  if (tok.empty()) {
    throw FormatError(std::string("pgm: missing ") + field);
  }
  int value = 0;
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FormatError(std::string("pgm: ") + field + " is not a number: '" +
                        tok + "'");
    }
    value = value * 10 + (c - '0');
    if (value > 1 << 29) {
      throw FormatError(std::string("pgm: ") + field + " out of range");
    }
  }
  return value;
}

}  // namespace

SonarImage load_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P5" && magic != "P2") {
    throw FormatError("pgm: magic '" + magic + "' is not P5 or P2");
  }
  const int width = parse_header_int(bytes, pos, "width");
  const int height = parse_header_int(bytes, pos, "height");
  const int maxval = parse_header_int(bytes, pos, "maxval");
  if (width < 1) throw FormatError("pgm: width must be >= 1");
  if (height < 1) throw FormatError("pgm: height must be >= 1");
  if (maxval < 1 || maxval > 255) {
    throw FormatError("pgm: maxval " + std::to_string(maxval) +
                      " outside [1,255]");
  }

  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<double> pixels(count);
  const double denom = maxval;

  if (magic == "P5") {
    // Exactly one whitespace byte separates the header from the payload.
    if (pos >= bytes.size() ||
        !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError("pgm: payload must follow maxval after one whitespace");
    }
    ++pos;
    if (bytes.size() - pos < count) {
      throw FormatError("pgm: payload truncated, expected " +
                        std::to_string(count) + " bytes, got " +
                        std::to_string(bytes.size() - pos));
    }
    for (std::size_t i = 0; i < count; ++i) {
      const int v = bytes[pos + i];
      if (v > maxval) {
        throw FormatError("pgm: payload value " + std::to_string(v) +
                          " exceeds maxval " + std::to_string(maxval));
      }
      pixels[i] = v / denom;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const int v = parse_header_int(bytes, pos, "payload");
      if (v > maxval) {
        throw FormatError("pgm: payload value " + std::to_string(v) +
                          " exceeds maxval " + std::to_string(maxval));
      }
      pixels[i] = v / denom;
    }
  }
  return SonarImage(height, width, std::move(pixels));
}

std::vector<std::uint8_t> save_pgm(const SonarImage& image) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n",
                              image.width(), image.height());
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + image.pixels().size());
  for (double v : image.pixels()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return out;
}

Block extract_block(const SonarImage& image, int row, int col, BlockShape shape) {
  if (shape.m < 1 || shape.n < 1) {
    throw ParameterError("extract_block: shape must be >= 1x1");
  }
  if (row < 0 || col < 0 || row + shape.m > image.height() ||
      col + shape.n > image.width()) {
    throw BoundsError("extract_block: " + std::to_string(shape.m) + "x" +
                      std::to_string(shape.n) + " block at (" +
                      std::to_string(row) + "," + std::to_string(col) +
                      ") exceeds " + std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " image");
  }
  Block block;
  block.shape = shape;
  block.row = row;
  block.col = col;
  block.pixels.resize(static_cast<std::size_t>(shape.m) * shape.n);
  for (int r = 0; r < shape.m; ++r) {
    for (int c = 0; c < shape.n; ++c) {
      block.pixels[r * shape.n + c] = image.at(row + r, col + c);
    }
  }
  return block;
}

std::vector<Block> sample_blocks(const SonarImage& image, int count,
                                 BlockShape shape, std::uint64_t seed) {
  if (count < 1) {
    throw ParameterError("sample_blocks: count must be >= 1");
  }
  if (shape.m > image.height() || shape.n > image.width()) {
    throw BoundsError("sample_blocks: " + std::to_string(shape.m) + "x" +
                      std::to_string(shape.n) + " block does not fit in " +
                      std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " image");
  }
  const std::uint64_t rows = image.height() - shape.m + 1;
  const std::uint64_t cols = image.width() - shape.n + 1;
  SplitMix64 rng(seed);
  std::vector<Block> blocks;
  blocks.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int r = static_cast<int>(rng.next_below(rows));
    const int c = static_cast<int>(rng.next_below(cols));
    blocks.push_back(extract_block(image, r, c, shape));
  }
  return blocks;
}

std::vector<Block> grid_blocks(const SonarImage& image, BlockShape shape,
                               int stride_r, int stride_c) {
  if (stride_r < 1 || stride_c < 1) {
    throw ParameterError("grid_blocks: strides must be >= 1");
  }
  if (shape.m > image.height() || shape.n > image.width()) {
    throw BoundsError("grid_blocks: " + std::to_string(shape.m) + "x" +
                      std::to_string(shape.n) + " block does not fit in " +
                      std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + " image");
  }
  std::vector<Block> blocks;
  for (int r = 0; r + shape.m <= image.height(); r += stride_r) {
    for (int c = 0; c + shape.n <= image.width(); c += stride_c) {
      blocks.push_back(extract_block(image, r, c, shape));
    }
  }
  return blocks;
}

BlockVector vectorize(const Block& block) {
  const std::size_t len = block.pixels.size();
  Eigen::VectorXd v(static_cast<Eigen::Index>(len));
  for (std::size_t i = 0; i < len; ++i) v[static_cast<Eigen::Index>(i)] = block.pixels[i];
  const double norm = v.norm();
  if (norm == 0.0) {
    throw DegenerateBlockError("vectorize: all-zero block at (" +
                               std::to_string(block.row) + "," +
                               std::to_string(block.col) + ")");
  }
  BlockVector out;
  out.values = v / norm;
  out.norm_applied = true;
  return out;
}

SonarImage add_salt_pepper(const SonarImage& image, double density,
                           std::uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0)) {
    throw ParameterError("add_salt_pepper: density " + std::to_string(density) +
                         " outside [0,1]");
  }
  SplitMix64 rng(seed);
  std::vector<double> pixels = image.pixels();
  for (double& v : pixels) {
    if (rng.next_double() < density) {
      v = rng.next_double() < 0.5 ? 0.0 : 1.0;
    }
  }
  return SonarImage(image.height(), image.width(), std::move(pixels));
}

}  // namespace srclpm
