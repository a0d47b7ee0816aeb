#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "srclpm/harness.hpp"
#include "srclpm/rng.hpp"

namespace srclpm {

std::string arm_name(Arm arm) {
  switch (arm) {
    case Arm::kLpmDl: return "lpm_dl";
    case Arm::kLpmRandom: return "lpm_random";
    case Arm::kGlobalSrc: return "global_src";
  }
  throw ParameterError("arm_name: unknown arm");
}

Arm arm_from_name(const std::string& name) {
  if (name == "lpm_dl") return Arm::kLpmDl;
  if (name == "lpm_random") return Arm::kLpmRandom;
  if (name == "global_src") return Arm::kGlobalSrc;
  throw ParameterError("unknown arm '" + name +
                       "', expected lpm_dl, lpm_random or global_src");
}

namespace {

constexpr std::uint64_t kTagTrial = 0x7121;
constexpr std::uint64_t kTagTrainBlocks = 0x40;
constexpr std::uint64_t kTagOdl = 0x50;
constexpr std::uint64_t kTagClassify = 0x60;
constexpr std::uint64_t kTagNoise = 0x70;

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.num_train_images < 1 || cfg.num_test_images < 1 ||
      cfg.blocks_per_train_image < 1 || cfg.atoms_per_class < 1 ||
      cfg.test_blocks < 1 || cfg.trials < 1) {
    throw ParameterError("config: all counts must be >= 1");
  }
  if (cfg.block_shape.m < 1 || cfg.block_shape.n < 1) {
    throw ParameterError("config: block_shape must be >= 1x1");
  }
  if (cfg.block_shape.m > cfg.image_height || cfg.block_shape.n > cfg.image_width) {
    throw BoundsError("config: block_shape " + std::to_string(cfg.block_shape.m) +
                      "x" + std::to_string(cfg.block_shape.n) +
                      " larger than image " + std::to_string(cfg.image_height) +
                      "x" + std::to_string(cfg.image_width));
  }
  if (cfg.clutter_level < 0.0) {
    throw ParameterError("config: clutter_level must be >= 0");
  }
  if (!(cfg.test_scale_min >= 0.75 && cfg.test_scale_max <= 1.25 &&
        cfg.test_scale_min <= cfg.test_scale_max)) {
    throw ParameterError("config: test scale range must lie inside [0.75,1.25]");
  }
  if (cfg.test_shift_frac < 0.0) {
    throw ParameterError("config: test_shift_frac must be >= 0");
  }
  for (double d : cfg.noise_densities) {
    if (!(d >= 0.0 && d <= 1.0)) {
      throw ParameterError("config: noise density " + std::to_string(d) +
                           " outside [0,1]");
    }
  }
  if (cfg.arms.empty()) {
    throw ParameterError("config: at least one arm required");
  }
  detail::validate_solver_config(cfg.solver);
}

// Rethrows the current module error annotated with the arm and trial.
[[noreturn]] void annotate(const std::string& where) {
  try {
    throw;
  } catch (const ParameterError& e) {
    throw ParameterError(where + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const BoundsError& e) {
    throw BoundsError(where + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + ": " + e.what());
  } catch (const DegenerateBlockError& e) {
    throw DegenerateBlockError(where + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(where + ": " + e.what());
  }
}

struct ArmAccum {
  std::vector<std::vector<long>> confusion;
  std::vector<double> trial_accuracy;
  double runtime = 0.0;
};

double population_std(const std::vector<double>& xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

ArmMetrics finalize_arm(const ArmAccum& acc, int num_classes, int tests_per_class,
                        int trials) {
  ArmMetrics m;
  m.confusion = acc.confusion;
  m.per_trial_accuracy = acc.trial_accuracy;
  m.runtime_seconds = acc.runtime;
  double mean = 0.0;
  for (double a : acc.trial_accuracy) mean += a;
  mean /= trials;
  m.accuracy_mean = mean;
  m.accuracy_std = population_std(acc.trial_accuracy, mean);
  // Per-class accuracy over trials is recovered from per-trial counts below.
  (void)num_classes;
  (void)tests_per_class;
  return m;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::vector<std::pair<double, Metrics>> noise_sweep_core(
    const ExperimentConfig& cfg, std::vector<double> densities);

Metrics run_experiment(const ExperimentConfig& config) {
  return noise_sweep_core(config, {0.0}).front().second;
}

std::vector<std::pair<double, Metrics>> noise_sweep(const ExperimentConfig& config) {
  if (config.noise_densities.empty()) {
    throw ParameterError("noise_sweep: noise_densities must be non-empty");
  }
  std::vector<double> densities = config.noise_densities;
  std::sort(densities.begin(), densities.end());
  return noise_sweep_core(config, std::move(densities));
}

// Shared implementation: runs each trial once (dataset + training), then
// classifies the test set once per density. run_experiment is the single
// density-0 case, so the noise sweep's density-0 entry matches it exactly.
std::vector<std::pair<double, Metrics>> noise_sweep_core(
    const ExperimentConfig& cfg, std::vector<double> densities) {
  validate_config(cfg);
  const int num_classes = 2;
  const int tests_per_class =
      cfg.self_test ? cfg.num_train_images : cfg.num_test_images;
  const int num_densities = static_cast<int>(densities.size());

  // accum[density][arm]
  std::vector<std::vector<ArmAccum>> accum(
      num_densities, std::vector<ArmAccum>(cfg.arms.size()));
  for (auto& per_density : accum) {
    for (auto& a : per_density) {
      a.confusion.assign(num_classes, std::vector<long>(num_classes, 0));
    }
  }
  std::vector<std::vector<std::vector<std::vector<long>>>> trial_class_hits(
      num_densities,
      std::vector<std::vector<std::vector<long>>>(cfg.arms.size()));

  for (int trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t trial_seed =
        mix_seed(cfg.seed, kTagTrial + static_cast<std::uint64_t>(trial));
    Dataset ds;
    try {
      ds = make_dataset(cfg, trial_seed);
    } catch (const Error&) {
      annotate("trial " + std::to_string(trial) + " dataset");
    }

    // Training blocks are shared by both LPM arms: the random-dictionary arm
    // uses the sampled blocks as-is, the learned arm condenses the same
    // blocks.
    const bool wants_lpm =
        std::any_of(cfg.arms.begin(), cfg.arms.end(), [](Arm a) {
          return a == Arm::kLpmDl || a == Arm::kLpmRandom;
        });
    std::vector<std::vector<Block>> blocks_by_class(num_classes);
    if (wants_lpm) {
      for (std::size_t i = 0; i < ds.train.size(); ++i) {
        const LabeledScene& scene = ds.train[i];
        auto blocks = sample_blocks(
            scene.image, cfg.blocks_per_train_image, cfg.block_shape,
            mix_seed(trial_seed, kTagTrainBlocks + static_cast<std::uint64_t>(i)));
        for (Block& b : blocks) {
          b.label = scene.spec.class_id;
          blocks_by_class[scene.spec.class_id].push_back(std::move(b));
        }
      }
    }

    // Train each requested arm once per trial.
    std::vector<LabeledDictionary> dicts;
    dicts.reserve(cfg.arms.size());
    for (std::size_t ai = 0; ai < cfg.arms.size(); ++ai) {
      const Arm arm = cfg.arms[ai];
      const auto t0 = Clock::now();
      try {
        switch (arm) {
          case Arm::kLpmRandom:
            dicts.push_back(build_concatenated(blocks_by_class));
            break;
          case Arm::kLpmDl: {
            OdlConfig odl = cfg.odl;
            odl.atoms_per_class = cfg.atoms_per_class;
            odl.seed = mix_seed(trial_seed, kTagOdl);
            dicts.push_back(learn_odl(blocks_by_class, odl, cfg.solver));
            break;
          }
          case Arm::kGlobalSrc: {
            const BlockShape whole{cfg.image_height, cfg.image_width};
            std::vector<std::vector<Block>> images_by_class(num_classes);
            for (const LabeledScene& scene : ds.train) {
              Block b = extract_block(scene.image, 0, 0, whole);
              b.label = scene.spec.class_id;
              images_by_class[scene.spec.class_id].push_back(std::move(b));
            }
            dicts.push_back(build_concatenated(images_by_class));
            break;
          }
        }
      } catch (const Error&) {
        annotate("arm " + arm_name(arm) + ", trial " + std::to_string(trial) +
                 " training");
      }
      for (int d = 0; d < num_densities; ++d) {
        accum[d][ai].runtime += seconds_since(t0) / num_densities;
      }
    }

    for (int d = 0; d < num_densities; ++d) {
      for (std::size_t ai = 0; ai < cfg.arms.size(); ++ai) {
        trial_class_hits[d][ai].push_back(std::vector<long>(num_classes, 0));
      }
    }

    for (std::size_t i = 0; i < ds.test.size(); ++i) {
      const int truth = ds.test[i].spec.class_id;
      const std::uint64_t classify_seed =
          mix_seed(trial_seed, kTagClassify + static_cast<std::uint64_t>(i));
      const std::uint64_t noise_seed =
          mix_seed(trial_seed, kTagNoise + static_cast<std::uint64_t>(i));
      for (int d = 0; d < num_densities; ++d) {
        const SonarImage corrupted =
            add_salt_pepper(ds.test[i].image, densities[d], noise_seed);
        for (std::size_t ai = 0; ai < cfg.arms.size(); ++ai) {
          const Arm arm = cfg.arms[ai];
          const auto t0 = Clock::now();
          int predicted = 0;
          try {
            if (arm == Arm::kGlobalSrc) {
              predicted = classify_global(dicts[ai], corrupted, cfg.solver).first;
            } else {
              predicted = classify_lpm(dicts[ai], corrupted, cfg.test_blocks,
                                       cfg.solver, cfg.fusion, classify_seed)
                              .predicted;
            }
          } catch (const Error&) {
            annotate("arm " + arm_name(arm) + ", trial " + std::to_string(trial) +
                     ", test image " + std::to_string(i));
          }
          accum[d][ai].runtime += seconds_since(t0);
          ++accum[d][ai].confusion[truth][predicted];
          if (predicted == truth) {
            ++trial_class_hits[d][ai].back()[truth];
          }
        }
      }
    }

    for (int d = 0; d < num_densities; ++d) {
      for (std::size_t ai = 0; ai < cfg.arms.size(); ++ai) {
        long hits = 0;
        for (long h : trial_class_hits[d][ai].back()) hits += h;
        accum[d][ai].trial_accuracy.push_back(
            static_cast<double>(hits) /
            static_cast<double>(num_classes * tests_per_class));
      }
    }
  }

  std::vector<std::pair<double, Metrics>> out;
  out.reserve(num_densities);
  for (int d = 0; d < num_densities; ++d) {
    Metrics metrics;
    metrics.num_classes = num_classes;
    metrics.trials = cfg.trials;
    metrics.tests_per_class = tests_per_class;
    for (std::size_t ai = 0; ai < cfg.arms.size(); ++ai) {
      ArmMetrics m =
          finalize_arm(accum[d][ai], num_classes, tests_per_class, cfg.trials);
      for (int cls = 0; cls < num_classes; ++cls) {
        std::vector<double> per_trial;
        per_trial.reserve(cfg.trials);
        for (int t = 0; t < cfg.trials; ++t) {
          per_trial.push_back(
              static_cast<double>(trial_class_hits[d][ai][t][cls]) /
              static_cast<double>(tests_per_class));
        }
        double mean = 0.0;
        for (double a : per_trial) mean += a;
        mean /= cfg.trials;
        m.per_class_mean.push_back(mean);
        m.per_class_std.push_back(population_std(per_trial, mean));
      }
      metrics.arms.emplace_back(cfg.arms[ai], std::move(m));
    }
    out.emplace_back(densities[d], std::move(metrics));
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::json metrics_to_json(const Metrics& metrics) {
  nlohmann::json arms = nlohmann::json::object();
  for (const auto& [arm, m] : metrics.arms) {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t k = 0; k < m.per_class_mean.size(); ++k) {
      per_class.push_back({{"accuracy_mean", m.per_class_mean[k]},
                           {"accuracy_std", m.per_class_std[k]}});
    }
    arms[arm_name(arm)] = {{"accuracy_mean", m.accuracy_mean},
                           {"accuracy_std", m.accuracy_std},
                           {"per_class", std::move(per_class)},
                           {"confusion", m.confusion},
                           {"per_trial_accuracy", m.per_trial_accuracy}};
  }
  return {{"num_classes", metrics.num_classes},
          {"trials", metrics.trials},
          {"tests_per_class", metrics.tests_per_class},
          {"arms", std::move(arms)}};
}

void append_csv_rows(std::string& out, const Metrics& metrics,
                     const std::string& density_prefix) {
  for (const auto& [arm, m] : metrics.arms) {
    for (std::size_t k = 0; k < m.per_class_mean.size(); ++k) {
      out += density_prefix + arm_name(arm) + ",class_" + std::to_string(k) +
             "," + format_double(m.per_class_mean[k]) + "," +
             format_double(m.per_class_std[k]) + "\n";
    }
    out += density_prefix + arm_name(arm) + ",overall," +
           format_double(m.accuracy_mean) + "," + format_double(m.accuracy_std) +
           "\n";
  }
}

std::vector<std::uint8_t> to_bytes(const std::string& s) {
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

}  // namespace

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw ParameterError("unknown report format '" + name +
                       "', expected json or csv");
}

std::vector<std::uint8_t> emit_report(const Metrics& metrics, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    return to_bytes(metrics_to_json(metrics).dump(2) + "\n");
  }
  std::string out = "arm,scope,accuracy_mean,accuracy_std\n";
  append_csv_rows(out, metrics, "");
  return to_bytes(out);
}

std::vector<std::uint8_t> emit_report(const Metrics& metrics,
                                      const std::string& format) {
  return emit_report(metrics, report_format_from_name(format));
}

std::vector<std::uint8_t> emit_report(
    const std::vector<std::pair<double, Metrics>>& sweep, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& [density, metrics] : sweep) {
      doc.push_back({{"density", density}, {"metrics", metrics_to_json(metrics)}});
    }
    return to_bytes(doc.dump(2) + "\n");
  }
  std::string out = "density,arm,scope,accuracy_mean,accuracy_std\n";
  for (const auto& [density, metrics] : sweep) {
    append_csv_rows(out, metrics, format_double(density) + ",");
  }
  return to_bytes(out);
}

std::vector<std::uint8_t> emit_report(
    const std::vector<std::pair<double, Metrics>>& sweep,
    const std::string& format) {
  return emit_report(sweep, report_format_from_name(format));
}

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParameterError("config: top-level value must be an object");
  }

  static const std::vector<std::string> known = {
      "num_train_images", "num_test_images", "blocks_per_train_image",
      "atoms_per_class", "test_blocks", "block_shape", "trials",
      "image_height", "image_width", "clutter_level", "test_scale_min",
      "test_scale_max", "test_shift_frac", "self_test", "seed", "solver",
      "odl", "fusion", "arms", "noise_densities"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParameterError("config: unknown field '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  try {
    read_field(doc, "num_train_images", cfg.num_train_images);
    read_field(doc, "num_test_images", cfg.num_test_images);
    read_field(doc, "blocks_per_train_image", cfg.blocks_per_train_image);
    read_field(doc, "atoms_per_class", cfg.atoms_per_class);
    read_field(doc, "test_blocks", cfg.test_blocks);
    if (doc.contains("block_shape")) {
      const auto& bs = doc.at("block_shape");
      cfg.block_shape.m = bs.at("m").get<int>();
      cfg.block_shape.n = bs.at("n").get<int>();
    }
    read_field(doc, "trials", cfg.trials);
    read_field(doc, "image_height", cfg.image_height);
    read_field(doc, "image_width", cfg.image_width);
    read_field(doc, "clutter_level", cfg.clutter_level);
    read_field(doc, "test_scale_min", cfg.test_scale_min);
    read_field(doc, "test_scale_max", cfg.test_scale_max);
    read_field(doc, "test_shift_frac", cfg.test_shift_frac);
    read_field(doc, "self_test", cfg.self_test);
    read_field(doc, "seed", cfg.seed);
    if (doc.contains("solver")) {
      const auto& s = doc.at("solver");
      for (const auto& [key, value] : s.items()) {
        if (key != "lambda" && key != "epsilon" && key != "max_iters" &&
            key != "tol" && key != "kkt_tol") {
          throw ParameterError("config: unknown solver field '" + key + "'");
        }
      }
      read_field(s, "lambda", cfg.solver.lambda);
      if (s.contains("epsilon") && !s.at("epsilon").is_null()) {
        cfg.solver.epsilon = s.at("epsilon").get<double>();
      }
      read_field(s, "max_iters", cfg.solver.max_iters);
      read_field(s, "tol", cfg.solver.tol);
      read_field(s, "kkt_tol", cfg.solver.kkt_tol);
    }
    if (doc.contains("odl")) {
      const auto& o = doc.at("odl");
      for (const auto& [key, value] : o.items()) {
        if (key != "lambda" && key != "epochs" && key != "batch_size") {
          throw ParameterError("config: unknown odl field '" + key + "'");
        }
      }
      read_field(o, "lambda", cfg.odl.lambda);
      read_field(o, "epochs", cfg.odl.epochs);
      read_field(o, "batch_size", cfg.odl.batch_size);
    }
    if (doc.contains("fusion")) {
      const std::string f = doc.at("fusion").get<std::string>();
      if (f == "ml") {
        cfg.fusion = FusionRule::kMaxLikelihood;
      } else if (f == "majority") {
        cfg.fusion = FusionRule::kMajorityVote;
      } else {
        throw ParameterError("config: unknown fusion '" + f +
                             "', expected ml or majority");
      }
    }
    if (doc.contains("arms")) {
      cfg.arms.clear();
      for (const auto& a : doc.at("arms")) {
        cfg.arms.push_back(arm_from_name(a.get<std::string>()));
      }
    }
    read_field(doc, "noise_densities", cfg.noise_densities);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json arms = nlohmann::json::array();
  for (Arm a : cfg.arms) arms.push_back(arm_name(a));
  nlohmann::json solver = {{"lambda", cfg.solver.lambda},
                           {"max_iters", cfg.solver.max_iters},
                           {"tol", cfg.solver.tol},
                           {"kkt_tol", cfg.solver.kkt_tol}};
  solver["epsilon"] =
      cfg.solver.epsilon ? nlohmann::json(*cfg.solver.epsilon) : nlohmann::json();
  const nlohmann::json doc = {
      {"num_train_images", cfg.num_train_images},
      {"num_test_images", cfg.num_test_images},
      {"blocks_per_train_image", cfg.blocks_per_train_image},
      {"atoms_per_class", cfg.atoms_per_class},
      {"test_blocks", cfg.test_blocks},
      {"block_shape", {{"m", cfg.block_shape.m}, {"n", cfg.block_shape.n}}},
      {"trials", cfg.trials},
      {"image_height", cfg.image_height},
      {"image_width", cfg.image_width},
      {"clutter_level", cfg.clutter_level},
      {"test_scale_min", cfg.test_scale_min},
      {"test_scale_max", cfg.test_scale_max},
      {"test_shift_frac", cfg.test_shift_frac},
      {"self_test", cfg.self_test},
      {"seed", cfg.seed},
      {"solver", std::move(solver)},
      {"odl",
       {{"lambda", cfg.odl.lambda},
        {"epochs", cfg.odl.epochs},
        {"batch_size", cfg.odl.batch_size}}},
      {"fusion", cfg.fusion == FusionRule::kMaxLikelihood ? "ml" : "majority"},
      {"arms", std::move(arms)},
      {"noise_densities", cfg.noise_densities},
  };
  return doc.dump(2) + "\n";
}

}  // namespace srclpm
