#include <doctest.h>

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "srclpm/harness.hpp"
#include "srclpm/rng.hpp"

using namespace srclpm;

namespace {

// Small, fast configuration used across these tests. Blocks are kept large
// relative to the image so enough of them straddle target boundaries;
// normalization makes flat blocks class-agnostic.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.num_train_images = 3;
  cfg.num_test_images = 3;
  cfg.blocks_per_train_image = 20;
  cfg.atoms_per_class = 12;
  cfg.test_blocks = 20;
  cfg.block_shape = {28, 18};
  cfg.trials = 2;
  cfg.image_height = 64;
  cfg.image_width = 64;
  cfg.clutter_level = 0.03;
  cfg.test_scale_min = 0.75;
  cfg.test_scale_max = 1.0;
  cfg.odl.epochs = 3;
  cfg.seed = 7;
  return cfg;
}

std::string as_string(const std::vector<std::uint8_t>& bytes) {
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

TEST_CASE("noiseless scenes have exact geometry") {
  SceneSpec spec;
  spec.class_id = 0;
  spec.height = 64;
  spec.width = 64;
  spec.center_row = 32.0;
  spec.center_col = 32.0;
  spec.scale = 1.0;
  spec.clutter_level = 0.0;
  spec.seed = 3;
  const SonarImage img = generate_scene(spec);

  int highlight = 0, shadow = 0;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      switch (scene_pixel_kind(spec, r, c)) {
        case ScenePixel::kHighlight:
          ++highlight;
          CHECK(img.at(r, c) == 0.9);
          break;
        case ScenePixel::kShadow:
          ++shadow;
          CHECK(img.at(r, c) == 0.05);
          break;
        case ScenePixel::kBackground:
          CHECK(img.at(r, c) == 0.3);
          break;
      }
    }
  }
  // Analytic rectangle areas: the highlight spans 13 integer rows (center-14
  // .. center-2) by 41 columns (center +/- 20); the shadow strip the
  // 12 rows below it.
  CHECK(highlight == 13 * 41);
  CHECK(shadow == 12 * 41);
}

TEST_CASE("scenes are deterministic per seed and differ across seeds") {
  SceneSpec spec;
  spec.class_id = 1;
  spec.height = 64;
  spec.width = 64;
  spec.center_row = 30.0;
  spec.center_col = 30.0;
  spec.clutter_level = 0.05;
  spec.seed = 9;
  CHECK(generate_scene(spec).pixels() == generate_scene(spec).pixels());
  SceneSpec other = spec;
  other.seed = 10;
  CHECK(generate_scene(spec).pixels() != generate_scene(other).pixels());
}

TEST_CASE("the two classes render clearly different targets") {
  SceneSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.center_row = 32.0;
  spec.center_col = 32.0;
  spec.clutter_level = 0.04;
  spec.seed = 11;

  double means[2];
  for (int cls = 0; cls < 2; ++cls) {
    spec.class_id = cls;
    const SonarImage img = generate_scene(spec);
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (scene_pixel_kind(spec, r, c) == ScenePixel::kHighlight) {
          sum += img.at(r, c);
          ++count;
        }
      }
    }
    REQUIRE(count > 0);
    means[cls] = sum / count;
  }
  CHECK(std::abs(means[0] - means[1]) > 0.2);
}

TEST_CASE("scene specs are validated") {
  SceneSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.center_row = 5.0;  // target sticks out of the top
  spec.center_col = 32.0;
  CHECK_THROWS_AS(generate_scene(spec), BoundsError);

  SceneSpec bad_scale;
  bad_scale.height = 128;
  bad_scale.width = 128;
  bad_scale.scale = 1.5;
  CHECK_THROWS_AS(generate_scene(bad_scale), ParameterError);

  SceneSpec bad_class;
  bad_class.class_id = 2;
  CHECK_THROWS_AS(generate_scene(bad_class), ParameterError);
}

TEST_CASE("make_dataset balances classes and stays inside the pose box") {
  ExperimentConfig cfg = tiny_config();
  cfg.num_test_images = 20;
  const Dataset ds = make_dataset(cfg, 5);

  CHECK(ds.train.size() == 6);
  CHECK(ds.test.size() == 40);

  int per_class[2] = {0, 0};
  for (const LabeledScene& s : ds.test) ++per_class[s.spec.class_id];
  CHECK(per_class[0] == 20);
  CHECK(per_class[1] == 20);

  for (const LabeledScene& s : ds.train) {
    CHECK(s.spec.center_row == (cfg.image_height - 1.0) / 2.0);
    CHECK(s.spec.center_col == (cfg.image_width - 1.0) / 2.0);
    CHECK(s.spec.scale == 1.0);
  }
  for (const LabeledScene& s : ds.test) {
    CHECK(s.spec.scale >= cfg.test_scale_min);
    CHECK(s.spec.scale <= cfg.test_scale_max);
    const auto [row_box, col_box] = test_pose_box(cfg, s.spec.class_id, s.spec.scale);
    CHECK(s.spec.center_row >= row_box.first);
    CHECK(s.spec.center_row <= row_box.second);
    CHECK(s.spec.center_col >= col_box.first);
    CHECK(s.spec.center_col <= col_box.second);
  }

  SUBCASE("fixed trial seeds give bit-identical datasets") {
    const Dataset again = make_dataset(cfg, 5);
    REQUIRE(again.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
      CHECK(ds.test[i].image.pixels() == again.test[i].image.pixels());
    }
  }
}

TEST_CASE("self-test on clean centered data is perfectly classified") {
  ExperimentConfig cfg = tiny_config();
  cfg.self_test = true;
  cfg.clutter_level = 0.0;
  cfg.trials = 1;
  const Metrics metrics = run_experiment(cfg);
  REQUIRE(metrics.arms.size() == 3);
  for (const auto& [arm, m] : metrics.arms) {
    CAPTURE(arm_name(arm));
    CHECK(m.accuracy_mean == 1.0);
    CHECK(m.accuracy_std == 0.0);
  }
}

TEST_CASE("confusion matrices account for every test image") {
  ExperimentConfig cfg = tiny_config();
  const Metrics metrics = run_experiment(cfg);
  CHECK(metrics.tests_per_class == cfg.num_test_images);
  for (const auto& [arm, m] : metrics.arms) {
    for (int truth = 0; truth < metrics.num_classes; ++truth) {
      long row = 0;
      for (long v : m.confusion[truth]) row += v;
      CHECK(row == static_cast<long>(cfg.num_test_images) * cfg.trials);
    }
    CHECK(m.per_trial_accuracy.size() == static_cast<std::size_t>(cfg.trials));
  }
}

TEST_CASE("identical configs produce byte-identical reports") {
  ExperimentConfig cfg = tiny_config();
  cfg.arms = {Arm::kLpmDl, Arm::kGlobalSrc};
  const Metrics a = run_experiment(cfg);
  const Metrics b = run_experiment(cfg);
  CHECK(emit_report(a, ReportFormat::kJson) == emit_report(b, ReportFormat::kJson));
  CHECK(emit_report(a, ReportFormat::kCsv) == emit_report(b, ReportFormat::kCsv));
}

TEST_CASE("noise sweep is paired with the clean run") {
  ExperimentConfig cfg = tiny_config();
  cfg.arms = {Arm::kLpmRandom};
  cfg.trials = 1;
  cfg.noise_densities = {0.25, 0.0};  // intentionally unsorted

  const auto sweep = noise_sweep(cfg);
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0].first == 0.0);
  CHECK(sweep[1].first == 0.25);

  const Metrics clean = run_experiment(cfg);
  CHECK(emit_report(sweep[0].second, ReportFormat::kJson) ==
        emit_report(clean, ReportFormat::kJson));

  SUBCASE("empty density lists are rejected") {
    cfg.noise_densities.clear();
    CHECK_THROWS_AS(noise_sweep(cfg), ParameterError);
  }
  SUBCASE("densities outside [0,1] are rejected") {
    cfg.noise_densities = {1.5};
    CHECK_THROWS_AS(noise_sweep(cfg), ParameterError);
  }
}

TEST_CASE("reports carry one row per arm and scope") {
  ExperimentConfig cfg = tiny_config();
  cfg.arms = {Arm::kLpmRandom};
  cfg.trials = 3;
  const Metrics metrics = run_experiment(cfg);

  SUBCASE("csv layout") {
    const std::string csv = as_string(emit_report(metrics, ReportFormat::kCsv));
    CHECK(csv.rfind("arm,scope,accuracy_mean,accuracy_std\n", 0) == 0);
    int lines = 0;
    for (char ch : csv) {
      if (ch == '\n') ++lines;
    }
    CHECK(lines == 1 + 3);  // header + class_0 + class_1 + overall
    CHECK(csv.find("lpm_random,class_0,") != std::string::npos);
    CHECK(csv.find("lpm_random,class_1,") != std::string::npos);
    CHECK(csv.find("lpm_random,overall,") != std::string::npos);
  }

  SUBCASE("json round-trips and matches the metrics") {
    const auto doc =
        nlohmann::json::parse(as_string(emit_report(metrics, ReportFormat::kJson)));
    const auto& arm = doc.at("arms").at("lpm_random");
    CHECK(arm.at("accuracy_mean").get<double>() ==
          doctest::Approx(metrics.arms[0].second.accuracy_mean).epsilon(1e-15));
    CHECK(arm.at("per_class").size() == 2);
    CHECK(doc.at("trials").get<int>() == 3);
  }

  SUBCASE("reported std matches a direct recomputation over trials") {
    const ArmMetrics& m = metrics.arms[0].second;
    double mean = 0.0;
    for (double a : m.per_trial_accuracy) mean += a;
    mean /= m.per_trial_accuracy.size();
    double var = 0.0;
    for (double a : m.per_trial_accuracy) var += (a - mean) * (a - mean);
    const double std_dev = std::sqrt(var / m.per_trial_accuracy.size());
    CHECK(m.accuracy_std == doctest::Approx(std_dev).epsilon(1e-12));
    CHECK(m.accuracy_mean == doctest::Approx(mean).epsilon(1e-12));
  }

  SUBCASE("unknown formats are parameter errors") {
    CHECK_THROWS_AS(emit_report(metrics, "yaml"), ParameterError);
  }
}

TEST_CASE("sweep reports add a density column") {
  ExperimentConfig cfg = tiny_config();
  cfg.arms = {Arm::kLpmRandom};
  cfg.trials = 1;
  cfg.noise_densities = {0.0, 0.1};
  const auto sweep = noise_sweep(cfg);
  const std::string csv = as_string(emit_report(sweep, ReportFormat::kCsv));
  CHECK(csv.rfind("density,arm,scope,accuracy_mean,accuracy_std\n", 0) == 0);
  CHECK(csv.find("\n0,lpm_random,class_0,") != std::string::npos);
  CHECK(csv.find("\n0.1,lpm_random,class_0,") != std::string::npos);

  const auto doc = nlohmann::json::parse(as_string(emit_report(sweep, ReportFormat::kJson)));
  REQUIRE(doc.is_array());
  CHECK(doc.size() == 2);
  CHECK(doc[0].at("density") == 0.0);
  CHECK(doc[1].at("density") == 0.1);
}

TEST_CASE("config json round-trips with defaults") {
  const ExperimentConfig defaults = config_from_json("{}");
  CHECK(defaults.num_train_images == 18);
  CHECK(defaults.block_shape.m == 60);
  CHECK(defaults.block_shape.n == 20);
  CHECK(defaults.trials == 10);
  CHECK(defaults.fusion == FusionRule::kMaxLikelihood);
  CHECK(defaults.arms.size() == 3);

  ExperimentConfig cfg = tiny_config();
  cfg.solver.epsilon = 0.2;
  cfg.fusion = FusionRule::kMajorityVote;
  cfg.arms = {Arm::kGlobalSrc};
  cfg.noise_densities = {0.1, 0.2};
  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.num_train_images == cfg.num_train_images);
  CHECK(back.block_shape == cfg.block_shape);
  CHECK(back.clutter_level == cfg.clutter_level);
  CHECK(back.solver.lambda == cfg.solver.lambda);
  REQUIRE(back.solver.epsilon.has_value());
  CHECK(*back.solver.epsilon == 0.2);
  CHECK(back.odl.epochs == cfg.odl.epochs);
  CHECK(back.fusion == cfg.fusion);
  CHECK(back.arms == cfg.arms);
  CHECK(back.noise_densities == cfg.noise_densities);
  CHECK(back.seed == cfg.seed);

  CHECK_THROWS_AS(config_from_json("{\"typo_field\": 1}"), ParameterError);
  CHECK_THROWS_AS(config_from_json("{\"fusion\": \"vote\"}"), ParameterError);
  CHECK_THROWS_AS(config_from_json("{\"arms\": [\"svm\"]}"), ParameterError);
  CHECK_THROWS_AS(config_from_json("not json"), ParameterError);
}

TEST_CASE("invalid experiment configs are rejected") {
  ExperimentConfig cfg = tiny_config();
  cfg.trials = 0;
  CHECK_THROWS_AS(run_experiment(cfg), ParameterError);

  cfg = tiny_config();
  cfg.block_shape = {100, 100};
  CHECK_THROWS_AS(run_experiment(cfg), BoundsError);

  cfg = tiny_config();
  cfg.arms.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ParameterError);
}

TEST_CASE("manifests round-trip") {
  std::vector<ManifestEntry> entries;
  entries.push_back({"train_c0_000.pgm", 0, 31.5, 31.5, 1.0, 123456789ull});
  entries.push_back({"test_c1_002.pgm", 1, 40.25, 18.0, 0.8, 987654321987654321ull});
  const auto back = manifest_from_json(manifest_to_json(entries));
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == entries[0].path);
  CHECK(back[1].class_id == 1);
  CHECK(back[1].row == doctest::Approx(40.25));
  CHECK(back[1].seed == entries[1].seed);

  CHECK_THROWS_AS(manifest_from_json("{}"), FormatError);
  CHECK_THROWS_AS(manifest_from_json("[{\"path\": 1}]"), FormatError);
}
