#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "srclpm/harness.hpp"
#include "srclpm/rng.hpp"

namespace srclpm {

namespace {

constexpr double kBackground = 0.3;

// Mine-like target: bright rectangular highlight over an adjacent dark
// shadow strip. Non-mine-like: dimmer elliptical highlight over a diffuse
// elliptical shadow. Coordinates below are in scale-normalized units
// relative to the target center.
constexpr double kMineHighTop = -14.0, kMineHighBottom = -2.0;
constexpr double kMineShadowBottom = 10.0;
constexpr double kMineHalfWidth = 20.0;
constexpr double kMineHighlight = 0.9, kMineShadow = 0.05;

constexpr double kRockHighRowC = -4.0, kRockHighRv = 10.0, kRockHighRh = 14.0;
constexpr double kRockShadowRowC = 8.0, kRockShadowRv = 10.0, kRockShadowRh = 15.0;
constexpr double kRockHighlight = 0.6;

// Base intensity and region kind for one pixel.
double scene_base(const SceneSpec& spec, int row, int col, ScenePixel& kind) {
  const double u = (row - spec.center_row) / spec.scale;
  const double v = (col - spec.center_col) / spec.scale;
  kind = ScenePixel::kBackground;
  if (spec.class_id == 0) {
    if (std::abs(v) <= kMineHalfWidth) {
      if (u >= kMineHighTop && u <= kMineHighBottom) {
        kind = ScenePixel::kHighlight;
        return kMineHighlight;
      }
      if (u > kMineHighBottom && u <= kMineShadowBottom) {
        kind = ScenePixel::kShadow;
        return kMineShadow;
      }
    }
    return kBackground;
  }
  const double hu = (u - kRockHighRowC) / kRockHighRv;
  const double hv = v / kRockHighRh;
  if (hu * hu + hv * hv <= 1.0) {
    kind = ScenePixel::kHighlight;
    return kRockHighlight;
  }
  const double su = (u - kRockShadowRowC) / kRockShadowRv;
  const double sv = v / kRockShadowRh;
  const double rho2 = su * su + sv * sv;
  if (rho2 <= 1.0) {
    kind = ScenePixel::kShadow;
    // Diffuse shadow: a dark core with a soft rim fading into the
    // background, instead of the mine's hard-edged strip.
    return 0.05 + 0.25 * rho2 * rho2;
  }
  return kBackground;
}

void validate_spec(const SceneSpec& spec) {
  if (spec.class_id != 0 && spec.class_id != 1) {
    throw ParameterError("scene: class_id must be 0 or 1");
  }
  if (spec.height < 1 || spec.width < 1) {
    throw ParameterError("scene: image size must be >= 1x1");
  }
  if (!(spec.scale >= 0.75 && spec.scale <= 1.25)) {
    throw ParameterError("scene: scale " + std::to_string(spec.scale) +
                         " outside [0.75,1.25]");
  }
  if (spec.clutter_level < 0.0) {
    throw ParameterError("scene: clutter_level must be >= 0");
  }
  const auto [ext_v, ext_h] = target_half_extents(spec.class_id, spec.scale);
  if (spec.center_row - ext_v < 0.0 ||
      spec.center_row + ext_v > spec.height - 1.0 ||
      spec.center_col - ext_h < 0.0 ||
      spec.center_col + ext_h > spec.width - 1.0) {
    throw BoundsError("scene: target centered at (" +
                      std::to_string(spec.center_row) + "," +
                      std::to_string(spec.center_col) + ") with extents " +
                      std::to_string(ext_v) + "x" + std::to_string(ext_h) +
                      " leaves the " + std::to_string(spec.height) + "x" +
                      std::to_string(spec.width) + " image");
  }
}

}  // namespace

std::pair<double, double> target_half_extents(int class_id, double scale) {
  if (class_id == 0) {
    return {std::max(-kMineHighTop, kMineShadowBottom) * scale,
            kMineHalfWidth * scale};
  }
  const double top = -(kRockHighRowC - kRockHighRv);                // 14
  const double bottom = kRockShadowRowC + kRockShadowRv;            // 18
  const double half_h = std::max(kRockHighRh, kRockShadowRh);       // 15
  return {std::max(top, bottom) * scale, half_h * scale};
}

ScenePixel scene_pixel_kind(const SceneSpec& spec, int row, int col) {
  ScenePixel kind;
  scene_base(spec, row, col, kind);
  return kind;
}

namespace {

// Speckle grain size in pixels. Sonar speckle is correlated at the scale of
// a resolution cell, so the noise field is a gaussian grid bilinearly
// interpolated to pixel resolution and renormalized to unit variance.
constexpr int kSpeckleCell = 5;

}  // namespace

SonarImage generate_scene(const SceneSpec& spec) {
  validate_spec(spec);
  const double noise_amp = std::sqrt(spec.clutter_level);
  SplitMix64 rng(spec.seed);

  const int grid_h = spec.height / kSpeckleCell + 2;
  const int grid_w = spec.width / kSpeckleCell + 2;
  std::vector<double> nodes(static_cast<std::size_t>(grid_h) * grid_w);
  for (double& g : nodes) g = rng.next_gaussian();

  std::vector<double> pixels(static_cast<std::size_t>(spec.height) * spec.width);
  std::size_t i = 0;
  for (int r = 0; r < spec.height; ++r) {
    const int gr = r / kSpeckleCell;
    const double fr = static_cast<double>(r - gr * kSpeckleCell) / kSpeckleCell;
    for (int c = 0; c < spec.width; ++c) {
      const int gc = c / kSpeckleCell;
      const double fc = static_cast<double>(c - gc * kSpeckleCell) / kSpeckleCell;
      const double w00 = (1.0 - fr) * (1.0 - fc);
      const double w01 = (1.0 - fr) * fc;
      const double w10 = fr * (1.0 - fc);
      const double w11 = fr * fc;
      const double mixed = w00 * nodes[gr * grid_w + gc] +
                           w01 * nodes[gr * grid_w + gc + 1] +
                           w10 * nodes[(gr + 1) * grid_w + gc] +
                           w11 * nodes[(gr + 1) * grid_w + gc + 1];
      const double unit_var =
          mixed / std::sqrt(w00 * w00 + w01 * w01 + w10 * w10 + w11 * w11);
      ScenePixel kind;
      const double base = scene_base(spec, r, c, kind);
      const double speckle = std::max(0.0, 1.0 + noise_amp * unit_var);
      pixels[i++] = std::clamp(base * speckle, 0.0, 1.0);
    }
  }
  return SonarImage(spec.height, spec.width, std::move(pixels));
}

namespace {

// Seed stream tags so every image, pose and sampling step gets its own
// deterministic stream.
constexpr std::uint64_t kTagTrainScene = 0x10;
constexpr std::uint64_t kTagTestScene = 0x20;
constexpr std::uint64_t kTagTestPose = 0x30;

}  // namespace

std::pair<std::pair<double, double>, std::pair<double, double>> test_pose_box(
    const ExperimentConfig& config, int class_id, double scale) {
  const auto [ext_v, ext_h] = target_half_extents(class_id, scale);
  const double h = config.image_height;
  const double w = config.image_width;
  const double center_r = (h - 1.0) / 2.0;
  const double center_c = (w - 1.0) / 2.0;
  const double row_lo = std::max(ext_v, center_r - config.test_shift_frac * h);
  const double row_hi = std::min(h - 1.0 - ext_v, center_r + config.test_shift_frac * h);
  const double col_lo = std::max(ext_h, center_c - config.test_shift_frac * w);
  const double col_hi = std::min(w - 1.0 - ext_h, center_c + config.test_shift_frac * w);
  if (row_lo > row_hi || col_lo > col_hi) {
    throw BoundsError("test_pose_box: target of class " +
                      std::to_string(class_id) + " at scale " +
                      std::to_string(scale) + " cannot fit in a " +
                      std::to_string(config.image_height) + "x" +
                      std::to_string(config.image_width) + " image");
  }
  return {{row_lo, row_hi}, {col_lo, col_hi}};
}

Dataset make_dataset(const ExperimentConfig& config, std::uint64_t trial_seed) {
  Dataset ds;
  const double center_r = (config.image_height - 1.0) / 2.0;
  const double center_c = (config.image_width - 1.0) / 2.0;

  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < config.num_train_images; ++i) {
      SceneSpec spec;
      spec.class_id = cls;
      spec.height = config.image_height;
      spec.width = config.image_width;
      spec.center_row = center_r;
      spec.center_col = center_c;
      spec.scale = 1.0;
      spec.clutter_level = config.clutter_level;
      spec.seed = mix_seed(trial_seed, kTagTrainScene +
                                           static_cast<std::uint64_t>(cls) * 4096 + i);
      ds.train.push_back({generate_scene(spec), spec});
    }
  }

  if (config.self_test) {
    ds.test = ds.train;
    return ds;
  }

  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < config.num_test_images; ++i) {
      const std::uint64_t tag = static_cast<std::uint64_t>(cls) * 4096 + i;
      SplitMix64 pose_rng(mix_seed(trial_seed, kTagTestPose + tag));
      SceneSpec spec;
      spec.class_id = cls;
      spec.height = config.image_height;
      spec.width = config.image_width;
      spec.scale = config.test_scale_min +
                   pose_rng.next_double() *
                       (config.test_scale_max - config.test_scale_min);
      const auto [row_box, col_box] = test_pose_box(config, cls, spec.scale);
      spec.center_row =
          row_box.first + pose_rng.next_double() * (row_box.second - row_box.first);
      spec.center_col =
          col_box.first + pose_rng.next_double() * (col_box.second - col_box.first);
      spec.clutter_level = config.clutter_level;
      spec.seed = mix_seed(trial_seed, kTagTestScene + tag);
      ds.test.push_back({generate_scene(spec), spec});
    }
  }
  return ds;
}

std::string manifest_to_json(const std::vector<ManifestEntry>& entries) {
  nlohmann::json doc = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    doc.push_back({{"path", e.path},
                   {"class_id", e.class_id},
                   {"pose", {{"row", e.row}, {"col", e.col}, {"scale", e.scale}}},
                   {"seed", e.seed}});
  }
  return doc.dump(2) + "\n";
}

std::vector<ManifestEntry> manifest_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (!doc.is_array()) {
    throw FormatError("manifest: top-level value must be a list");
  }
  std::vector<ManifestEntry> entries;
  entries.reserve(doc.size());
  try {
    for (const auto& item : doc) {
      ManifestEntry e;
      e.path = item.at("path").get<std::string>();
      e.class_id = item.at("class_id").get<int>();
      const auto& pose = item.at("pose");
      e.row = pose.at("row").get<double>();
      e.col = pose.at("col").get<double>();
      e.scale = pose.at("scale").get<double>();
      e.seed = item.at("seed").get<std::uint64_t>();
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return entries;
}

}  // namespace srclpm
