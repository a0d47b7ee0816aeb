#include "srclpm/dictionary.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "srclpm/rng.hpp"

namespace srclpm {

LabeledDictionary::LabeledDictionary(Eigen::MatrixXd columns,
                                     std::vector<int> labels, int num_classes,
                                     BlockShape block_shape)
    : columns_(std::move(columns)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      block_shape_(block_shape) {
  if (num_classes_ < 2) {
    throw ParameterError("LabeledDictionary: need at least 2 classes, got " +
                         std::to_string(num_classes_));
  }
  if (columns_.cols() < 1 || columns_.rows() < 1) {
    throw ParameterError("LabeledDictionary: empty column matrix");
  }
  if (static_cast<Eigen::Index>(labels_.size()) != columns_.cols()) {
    throw ShapeError("LabeledDictionary: " + std::to_string(labels_.size()) +
                     " labels for " + std::to_string(columns_.cols()) +
                     " columns");
  }
  if (static_cast<Eigen::Index>(block_shape_.m) * block_shape_.n != columns_.rows()) {
    throw ShapeError("LabeledDictionary: block shape " +
                     std::to_string(block_shape_.m) + "x" +
                     std::to_string(block_shape_.n) + " does not match " +
                     std::to_string(columns_.rows()) + " rows");
  }

  class_offsets_.assign(num_classes_ + 1, 0);
  int prev = -1;
  for (std::size_t j = 0; j < labels_.size(); ++j) {
    const int lab = labels_[j];
    if (lab < 0 || lab >= num_classes_) {
      throw ParameterError("LabeledDictionary: label " + std::to_string(lab) +
                           " outside [0," + std::to_string(num_classes_) + ")");
    }
    if (lab < prev) {
      throw ParameterError("LabeledDictionary: class columns not contiguous");
    }
    prev = lab;
    ++class_offsets_[lab + 1];
  }
  for (int kcl = 0; kcl < num_classes_; ++kcl) {
    if (class_offsets_[kcl + 1] == 0) {
      throw ParameterError("LabeledDictionary: class " + std::to_string(kcl) +
                           " owns no columns");
    }
    class_offsets_[kcl + 1] += class_offsets_[kcl];
  }

  for (Eigen::Index j = 0; j < columns_.cols(); ++j) {
    const double norm = columns_.col(j).norm();
    if (std::abs(norm - 1.0) > 1e-6) {
      throw ParameterError("LabeledDictionary: column " + std::to_string(j) +
                           " has norm " + std::to_string(norm));
    }
  }

  gram_.noalias() = columns_.transpose() * columns_;
  spectral_bound_ = detail::spectral_bound(gram_);
}

std::pair<int, int> LabeledDictionary::class_range(int k) const {
  if (k < 0 || k >= num_classes_) {
    throw ParameterError("class_range: class " + std::to_string(k) +
                         " outside [0," + std::to_string(num_classes_) + ")");
  }
  return {class_offsets_[k], class_offsets_[k + 1]};
}

LabeledDictionary build_concatenated(
    const std::vector<std::vector<Block>>& blocks_by_class) {
  const int num_classes = static_cast<int>(blocks_by_class.size());
  if (num_classes < 2) {
    throw ParameterError("build_concatenated: need at least 2 classes");
  }
  BlockShape shape;
  bool shape_set = false;
  std::size_t total = 0;
  for (int k = 0; k < num_classes; ++k) {
    if (blocks_by_class[k].empty()) {
      throw ParameterError("build_concatenated: class " + std::to_string(k) +
                           " has no blocks");
    }
    for (const Block& b : blocks_by_class[k]) {
      if (!shape_set) {
        shape = b.shape;
        shape_set = true;
      } else if (!(b.shape == shape)) {
        throw ShapeError("build_concatenated: mixed block shapes " +
                         std::to_string(shape.m) + "x" + std::to_string(shape.n) +
                         " vs " + std::to_string(b.shape.m) + "x" +
                         std::to_string(b.shape.n));
      }
      if (b.label && *b.label != k) {
        throw ParameterError("build_concatenated: block labeled " +
                             std::to_string(*b.label) + " found in class " +
                             std::to_string(k));
      }
      ++total;
    }
  }

  const Eigen::Index dim = static_cast<Eigen::Index>(shape.m) * shape.n;
  Eigen::MatrixXd columns(dim, static_cast<Eigen::Index>(total));
  std::vector<int> labels;
  labels.reserve(total);
  Eigen::Index col = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (const Block& b : blocks_by_class[k]) {
      columns.col(col++) = vectorize(b).values;
      labels.push_back(k);
    }
  }
  return LabeledDictionary(std::move(columns), std::move(labels), num_classes,
                           shape);
}

Eigen::MatrixXd init_atoms(const std::vector<BlockVector>& samples, int count,
                           std::uint64_t seed) {
  const int n = static_cast<int>(samples.size());
  if (count < 1 || count > n) {
    throw ParameterError("init_atoms: count " + std::to_string(count) +
                         " outside [1," + std::to_string(n) + "]");
  }
  const Eigen::Index dim = samples.front().values.size();
  for (const BlockVector& s : samples) {
    if (s.values.size() != dim) {
      throw ShapeError("init_atoms: samples of mixed dimension");
    }
  }

  // Partial Fisher-Yates: the first `count` slots end up a uniform draw
  // without replacement.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SplitMix64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }

  Eigen::MatrixXd atoms(dim, count);
  for (int i = 0; i < count; ++i) {
    atoms.col(i) = samples[idx[i]].values;
  }
  return atoms;
}

OdlState make_odl_state(Eigen::MatrixXd initial_atoms) {
  OdlState state;
  const Eigen::Index k = initial_atoms.cols();
  state.memory_a = Eigen::MatrixXd::Zero(k, k);
  state.memory_b = Eigen::MatrixXd::Zero(initial_atoms.rows(), k);
  state.atoms = std::move(initial_atoms);
  return state;
}

namespace {

constexpr double kDeadAtomFloor = 1e-10;

void sweep_atoms(OdlState& state) {
  const Eigen::Index k = state.atoms.cols();
  for (Eigen::Index j = 0; j < k; ++j) {
    const double ajj = state.memory_a(j, j);
    if (ajj < kDeadAtomFloor) continue;  // dead atom, leave as is
    Eigen::VectorXd u =
        (state.memory_b.col(j) - state.atoms * state.memory_a.col(j)) / ajj +
        state.atoms.col(j);
    state.atoms.col(j) = u / std::max(u.norm(), 1.0);
  }
}

}  // namespace

OdlState odl_step_batch(OdlState state, const Eigen::MatrixXd& samples,
                        double lambda, const SolverConfig& solver) {
  if (samples.rows() != state.atoms.rows()) {
    throw ShapeError("odl_step: sample dimension " +
                     std::to_string(samples.rows()) + " != atom dimension " +
                     std::to_string(state.atoms.rows()));
  }
  if (lambda <= 0.0) {
    throw ParameterError("odl_step: lambda must be > 0");
  }

  // Code against the working atoms. They may be sub-unit-norm mid-epoch, so
  // this goes through the Gram-space core rather than solve_l1.
  Eigen::MatrixXd gram(state.atoms.cols(), state.atoms.cols());
  gram.noalias() = state.atoms.transpose() * state.atoms;
  Eigen::MatrixXd c(state.atoms.cols(), samples.cols());
  c.noalias() = state.atoms.transpose() * samples;
  const Eigen::VectorXd y_sq = samples.colwise().squaredNorm();
  const double bound = detail::spectral_bound(gram);
  auto codes = detail::fista_gram(gram, c, y_sq, bound, lambda,
                                  solver.max_iters, solver.tol, solver.kkt_tol);

  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    const Eigen::VectorXd& alpha = codes[i].beta;
    state.memory_a.noalias() += alpha * alpha.transpose();
    state.memory_b.noalias() += samples.col(i) * alpha.transpose();
  }
  sweep_atoms(state);
  return state;
}

OdlState odl_step(OdlState state, const Eigen::VectorXd& sample, double lambda,
                  const SolverConfig& solver) {
  return odl_step_batch(std::move(state), sample, lambda, solver);
}

double odl_surrogate(const OdlState& state) {
  const double quad =
      ((state.atoms.transpose() * state.atoms).cwiseProduct(state.memory_a))
          .sum();
  const double lin = (state.atoms.cwiseProduct(state.memory_b)).sum();
  return 0.5 * quad - lin;
}

LabeledDictionary learn_odl(const std::vector<std::vector<Block>>& blocks_by_class,
                            const OdlConfig& odl, const SolverConfig& solver) {
  const int num_classes = static_cast<int>(blocks_by_class.size());
  if (num_classes < 2) {
    throw ParameterError("learn_odl: need at least 2 classes");
  }
  if (odl.atoms_per_class < 1) {
    throw ParameterError("learn_odl: atoms_per_class must be >= 1");
  }
  if (odl.epochs < 0) {
    throw ParameterError("learn_odl: epochs must be >= 0");
  }
  if (odl.batch_size < 1) {
    throw ParameterError("learn_odl: batch_size must be >= 1");
  }
  if (odl.lambda <= 0.0) {
    throw ParameterError("learn_odl: lambda must be > 0");
  }

  BlockShape shape;
  bool shape_set = false;
  std::vector<Eigen::MatrixXd> class_atoms(num_classes);

  for (int k = 0; k < num_classes; ++k) {
    std::vector<BlockVector> samples;
    samples.reserve(blocks_by_class[k].size());
    for (const Block& b : blocks_by_class[k]) {
      if (!shape_set) {
        shape = b.shape;
        shape_set = true;
      } else if (!(b.shape == shape)) {
        throw ShapeError("learn_odl: mixed block shapes");
      }
      const bool all_zero =
          std::all_of(b.pixels.begin(), b.pixels.end(),
                      [](double v) { return v == 0.0; });
      if (all_zero) continue;  // degenerate blocks carry no signal
      samples.push_back(vectorize(b));
    }
    if (static_cast<int>(samples.size()) < odl.atoms_per_class) {
      throw ParameterError("learn_odl: class " + std::to_string(k) + " has " +
                           std::to_string(samples.size()) +
                           " usable blocks, needs >= " +
                           std::to_string(odl.atoms_per_class));
    }

    // Seeds are derived from the config alone (not the class index), so a
    // class's learned atoms depend only on its own blocks; permuting class
    // order permutes the output sub-dictionaries bit-exactly.
    OdlState state =
        make_odl_state(init_atoms(samples, odl.atoms_per_class,
                                  mix_seed(odl.seed, 0x1A17)));
    const int n = static_cast<int>(samples.size());
    const Eigen::Index dim = samples.front().values.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < odl.epochs; ++epoch) {
      SplitMix64 rng(mix_seed(odl.seed, 0xE60C + static_cast<std::uint64_t>(epoch)));
      for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(i + 1));
        std::swap(order[i], order[j]);
      }
      for (int start = 0; start < n; start += odl.batch_size) {
        const int b = std::min(odl.batch_size, n - start);
        Eigen::MatrixXd batch(dim, b);
        for (int i = 0; i < b; ++i) {
          batch.col(i) = samples[order[start + i]].values;
        }
        state = odl_step_batch(std::move(state), batch, odl.lambda, solver);
      }
      for (Eigen::Index j = 0; j < state.atoms.cols(); ++j) {
        const double norm = state.atoms.col(j).norm();
        if (norm > 1e-12) state.atoms.col(j) /= norm;
      }
    }
    class_atoms[k] = std::move(state.atoms);
  }

  const Eigen::Index dim = static_cast<Eigen::Index>(shape.m) * shape.n;
  Eigen::MatrixXd columns(dim, static_cast<Eigen::Index>(num_classes) *
                                   odl.atoms_per_class);
  std::vector<int> labels;
  labels.reserve(columns.cols());
  for (int k = 0; k < num_classes; ++k) {
    columns.middleCols(static_cast<Eigen::Index>(k) * odl.atoms_per_class,
                       odl.atoms_per_class) = class_atoms[k];
    for (int j = 0; j < odl.atoms_per_class; ++j) labels.push_back(k);
  }
  return LabeledDictionary(std::move(columns), std::move(labels), num_classes,
                           shape);
}

namespace {

constexpr char kMagic[4] = {'S', 'R', 'C', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (in.size() - pos < 4) {
    throw FormatError("dictionary container: truncated header");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  }
  pos += 4;
  return v;
}

double get_f64(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  }
  pos += 8;
  return std::bit_cast<double>(bits);
}

}  // namespace

std::vector<std::uint8_t> serialize_dictionary(const LabeledDictionary& dict) {
  std::vector<std::uint8_t> out;
  const Eigen::Index rows = dict.rows();
  const Eigen::Index cols = dict.size();
  out.reserve(24 + 4 * cols + 8 * rows * cols);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  put_u32(out, static_cast<std::uint32_t>(dict.num_classes()));
  put_u32(out, static_cast<std::uint32_t>(dict.block_shape().m));
  put_u32(out, static_cast<std::uint32_t>(dict.block_shape().n));
  for (int lab : dict.labels()) put_u32(out, static_cast<std::uint32_t>(lab));
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      put_f64(out, dict.columns()(i, j));
    }
  }
  return out;
}

LabeledDictionary deserialize_dictionary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("dictionary container: bad magic, expected SRCD");
  }
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(bytes, pos);
  if (version != kVersion) {
    throw FormatError("dictionary container: unsupported version " +
                      std::to_string(version));
  }
  const std::uint32_t rows = get_u32(bytes, pos);
  const std::uint32_t cols = get_u32(bytes, pos);
  const std::uint32_t num_classes = get_u32(bytes, pos);
  const std::uint32_t block_m = get_u32(bytes, pos);
  const std::uint32_t block_n = get_u32(bytes, pos);
  if (rows == 0 || cols == 0) {
    throw FormatError("dictionary container: zero rows or columns");
  }
  if (rows > (1u << 26) || cols > (1u << 26)) {
    throw FormatError("dictionary container: implausible dimensions");
  }
  const std::size_t need = 4 * static_cast<std::size_t>(cols) +
                           8 * static_cast<std::size_t>(rows) * cols;
  if (bytes.size() - pos < need) {
    throw FormatError("dictionary container: truncated payload, expected " +
                      std::to_string(need) + " bytes after header");
  }

  std::vector<int> labels(cols);
  for (std::uint32_t j = 0; j < cols; ++j) {
    labels[j] = static_cast<int>(get_u32(bytes, pos));
  }
  Eigen::MatrixXd columns(rows, cols);
  for (std::uint32_t j = 0; j < cols; ++j) {
    for (std::uint32_t i = 0; i < rows; ++i) {
      columns(i, j) = get_f64(bytes, pos);
    }
  }

  try {
    return LabeledDictionary(std::move(columns), std::move(labels),
                             static_cast<int>(num_classes),
                             BlockShape{static_cast<int>(block_m),
                                        static_cast<int>(block_n)});
  } catch (const Error& e) {
    throw FormatError(std::string("dictionary container: ") + e.what());
  }
}

void save_dictionary(const LabeledDictionary& dict, const std::string& path) {
  const auto bytes = serialize_dictionary(dict);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("save_dictionary: cannot open " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw FormatError("save_dictionary: write failed for " + path);
  }
}

LabeledDictionary load_dictionary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_dictionary: cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_dictionary(bytes);
}

}  // namespace srclpm
