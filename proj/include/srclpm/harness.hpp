#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srclpm/classifier.hpp"
#include "srclpm/dictionary.hpp"
#include "srclpm/image.hpp"
#include "srclpm/solver.hpp"

namespace srclpm {

/// Description of one synthetic sonar-like scene: a speckled background with
/// a class-dependent target (bright boxy highlight + crisp shadow for
/// mine-like, dimmer rounded highlight + diffuse shadow for non-mine-like)
/// at the given center and scale.
struct SceneSpec {
  int class_id = 0;  // 0 = mine-like, 1 = non-mine-like
  int height = 128;
  int width = 128;
  double center_row = 63.5;
  double center_col = 63.5;
  double scale = 1.0;          // target scale factor in [0.75, 1.25]
  double clutter_level = 0.0;  // speckle variance (0 = noiseless)
  std::uint64_t seed = 0;
};

enum class ScenePixel { kBackground, kHighlight, kShadow };

/// Region membership of a pixel under the spec's target geometry. This is
/// the same predicate the generator renders from, so tests can compute
/// region statistics without duplicating the geometry.
ScenePixel scene_pixel_kind(const SceneSpec& spec, int row, int col);

/// (vertical, horizontal) half-extents of the full target footprint
/// (highlight plus shadow) at the given scale, in pixels.
std::pair<double, double> target_half_extents(int class_id, double scale);

/// Renders the scene: per-pixel base intensity times a multiplicative
/// speckle factor max(0, 1 + sqrt(clutter_level)*gaussian), clamped to
/// [0,1]. Deterministic per seed. The target must fit fully in the image.
SonarImage generate_scene(const SceneSpec& spec);

/// Comparison arms of the benchmark.
enum class Arm { kLpmDl, kLpmRandom, kGlobalSrc };

std::string arm_name(Arm arm);
Arm arm_from_name(const std::string& name);

/// The full benchmark configuration. Counts are per class. The JSON config
/// file mirrors these field names one-for-one.
struct ExperimentConfig {
  int num_train_images = 18;
  int num_test_images = 20;
  int blocks_per_train_image = 18;
  int atoms_per_class = 60;
  int test_blocks = 30;
  BlockShape block_shape{60, 20};
  int trials = 10;
  int image_height = 128;
  int image_width = 128;
  double clutter_level = 0.04;
  double test_scale_min = 0.75;
  double test_scale_max = 1.25;
  double test_shift_frac = 0.25;  // max target shift, fraction of image size
  bool self_test = false;         // reuse the training images as the test set
  std::uint64_t seed = 42;
  SolverConfig solver{.lambda = 0.1,
                      .epsilon = {},
                      .max_iters = 400,
                      .tol = 1e-7,
                      .kkt_tol = 1e-4};
  OdlConfig odl{.atoms_per_class = 0,  // taken from atoms_per_class above
                .lambda = 0.1,
                .epochs = 5,
                .seed = 0,  // derived per trial
                .batch_size = 1};
  FusionRule fusion = FusionRule::kMaxLikelihood;
  std::vector<Arm> arms{Arm::kLpmDl, Arm::kLpmRandom, Arm::kGlobalSrc};
  std::vector<double> noise_densities;  // used by noise_sweep
};

/// Parses / emits the JSON config described in the README. Every field is
/// optional and defaults to the values above; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

struct LabeledScene {
  SonarImage image;
  SceneSpec spec;
};

struct Dataset {
  std::vector<LabeledScene> train;
  std::vector<LabeledScene> test;
};

/// Valid center range (row, then col, each as [lo, hi]) for a test target of
/// the given class and scale: fits inside the image and is shifted at most
/// shift_frac of each dimension from the image center.
std::pair<std::pair<double, double>, std::pair<double, double>> test_pose_box(
    const ExperimentConfig& config, int class_id, double scale);

/// Builds one trial's data: training scenes centered at canonical pose and
/// scale 1, test scenes with uniformly drawn scale and translation inside
/// the pose box. Per-image seeds are derived from trial_seed; the result is
/// bit-identical for identical inputs.
Dataset make_dataset(const ExperimentConfig& config, std::uint64_t trial_seed);

/// Accuracy summary for one arm. Standard deviations are population standard
/// deviations over trials; the confusion matrix is [true][predicted], summed
/// over trials. runtime_seconds is informational and never serialized.
struct ArmMetrics {
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  std::vector<double> per_class_mean;
  std::vector<double> per_class_std;
  std::vector<std::vector<long>> confusion;
  std::vector<double> per_trial_accuracy;
  double runtime_seconds = 0.0;
};

struct Metrics {
  int num_classes = 2;
  int trials = 0;
  int tests_per_class = 0;
  std::vector<std::pair<Arm, ArmMetrics>> arms;
};

/// Runs the configured experiment: per trial, generate a dataset, train each
/// requested arm, classify every test image, and aggregate over trials.
/// Deterministic per config.
Metrics run_experiment(const ExperimentConfig& config);

/// Repeats the experiment with salt-and-pepper corruption applied to the
/// test images only, one entry per density (sorted ascending). Trial seeds
/// and training are shared across densities, so the density-0 entry equals
/// the clean run exactly.
std::vector<std::pair<double, Metrics>> noise_sweep(const ExperimentConfig& config);

enum class ReportFormat { kJson, kCsv };

ReportFormat report_format_from_name(const std::string& name);

std::vector<std::uint8_t> emit_report(const Metrics& metrics, ReportFormat format);
std::vector<std::uint8_t> emit_report(const Metrics& metrics,
                                      const std::string& format);
std::vector<std::uint8_t> emit_report(
    const std::vector<std::pair<double, Metrics>>& sweep, ReportFormat format);
std::vector<std::uint8_t> emit_report(
    const std::vector<std::pair<double, Metrics>>& sweep,
    const std::string& format);

/// One dataset image on disk, as recorded in a gen-data manifest.
struct ManifestEntry {
  std::string path;
  int class_id = 0;
  double row = 0.0;
  double col = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

std::string manifest_to_json(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> manifest_from_json(const std::string& text);

}  // namespace srclpm
