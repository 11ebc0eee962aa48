/*
 * Copyright 2026 The Salmap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SALMAP_CLI_HPP_
#define SALMAP_CLI_HPP_

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "salmap/attribution.hpp"
#include "salmap/errors.hpp"
#include "salmap/goal_eval.hpp"
#include "salmap/gradcheck.hpp"
#include "salmap/pgm.hpp"
#include "salmap/scenes.hpp"
#include "salmap/train.hpp"
#include "salmap/weights_io.hpp"

namespace salmap {

inline constexpr const char* kManifestHeader =
    "id,class,seed,object_count,contrast,distractors,noise_sigma,size,split";

struct ManifestRow {
  std::string id;
  SceneSpec spec;
  std::string split;  // "train" or "test"
};

inline std::string manifest_line(const ManifestRow& row) {
  const SceneSpec& s = row.spec;
  return row.id + "," + std::string(scene_class_name(s.label)) + "," + std::to_string(s.seed) +
         "," + std::to_string(s.object_count) + "," + exact_decimal(s.contrast) + "," +
         std::to_string(s.distractors) + "," + exact_decimal(s.noise_sigma) + "," +
         std::to_string(s.size) + "," + row.split;
}

inline std::vector<ManifestRow> read_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  std::vector<ManifestRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    const std::size_t offset = pos;
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != kManifestHeader) throw FormatError(path, offset, "unexpected manifest header");
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw FormatError(path, offset, "expected 9 fields");
    try {
      ManifestRow row;
      row.id = f[0];
      row.spec.label = parse_scene_class(f[1]);
      row.spec.seed = std::stoull(f[2]);
      row.spec.object_count = std::stoul(f[3]);
      row.spec.contrast = std::stod(f[4]);
      row.spec.distractors = std::stoul(f[5]);
      row.spec.noise_sigma = std::stod(f[6]);
      row.spec.size = std::stoul(f[7]);
      row.split = f[8];
      if (row.split != "train" && row.split != "test") throw ValidationError("bad split");
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw FormatError(path, offset, std::string("bad manifest row: ") + e.what());
    }
  }
  if (header) throw FormatError(path, 0, "empty manifest");
  return rows;
}

namespace cli_detail {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Common {
  std::uint64_t seed = 0;
  std::string config_echo;
  std::size_t workers = 1;
};

inline void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  app->add_option("--config-echo", c.config_echo, "Also write the effective configuration here");
  app->add_option("--workers", c.workers, "Threads for independent evaluations")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
}

// Prints the configuration and writes it beside `artifact` (and to
// --config-echo when given).
inline void echo_config(const ojson& config, const Common& c, const std::string& artifact,
                        std::ostream& out) {
  const std::string text = config.dump(2) + "\n";
  out << "config " << config.dump() << "\n";
  if (!artifact.empty()) write_file_bytes(artifact, text);
  if (!c.config_echo.empty()) write_file_bytes(c.config_echo, text);
}

inline void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Scenes of a data directory, regenerated from the manifest and checked
// against the stored images.
struct LoadedScenes {
  std::vector<Scene> train;
  std::vector<Scene> test;
};

inline LoadedScenes load_scenes(const std::string& dir) {
  const std::string manifest = (fs::path(dir) / "manifest.csv").string();
  LoadedScenes out;
  for (const ManifestRow& row : read_manifest(manifest)) {
    Scene scene = generate_scene(row.spec);
    const std::string image_path = (fs::path(dir) / "images" / (row.id + ".pgm")).string();
    const Tensor stored = read_pgm(image_path);
    require_shape(stored, scene.image.shape(), image_path);
    for (std::size_t i = 0; i < stored.size(); ++i) {
      if (std::abs(stored[i] - scene.image[i]) > 0.5 / 65535.0 + 1e-12) {
        throw ValidationError(image_path + ": image does not match its manifest spec");
      }
    }
    (row.split == "train" ? out.train : out.test).push_back(std::move(scene));
  }
  return out;
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::kOcclusion, Method::kGradCAM, Method::kCAM,
                   Method::kIntegratedGradients}) {
    if (name == method_name(m)) return m;
  }
  throw ValidationError("--method: unknown method '" + name + "'");
}

inline std::vector<std::string> method_choices() { return {"occlusion", "gradcam", "cam", "ig"}; }

struct AttributionFlags {
  std::size_t steps = 64;
  std::optional<std::size_t> patch_size;
  std::size_t stride = 1;
  std::optional<std::size_t> layer;
};

inline void add_attribution_flags(CLI::App* app, AttributionFlags& f) {
  app->add_option("--steps", f.steps, "Integrated-gradients steps")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->capture_default_str();
  app->add_option("--patch-size", f.patch_size, "Occlusion patch side (odd)")
      ->check(CLI::PositiveNumber);
  app->add_option("--stride", f.stride, "Occlusion stride")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--layer", f.layer, "Grad-CAM layer index");
}

inline AttributionSettings settings_from(const AttributionFlags& f, std::size_t workers) {
  if (f.patch_size && *f.patch_size % 2 == 0) {
    throw ValidationError("--patch-size must be odd, got " + std::to_string(*f.patch_size));
  }
  AttributionSettings s;
  s.occlusion.patch_size = f.patch_size;
  s.occlusion.stride = f.stride;
  s.occlusion.workers = workers;
  s.gradcam.layer = f.layer;
  s.ig.steps = f.steps;
  s.ig.workers = workers;
  return s;
}

inline ojson common_json(const std::string& command, const Common& c) {
  return {{"command", command}, {"seed", c.seed}, {"workers", c.workers}};
}

inline void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file_bytes(path, text);
}

}  // namespace cli_detail

// Entry point shared by the executable and the tests. Returns 0 on success,
// 1 on invalid input, 2 on runtime failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Saliency maps for small CNNs on synthetic scenes"};
  app.name("salmap");
  app.require_subcommand(1);

  Common common;
  AttributionFlags attr;

  std::string data_dir, out_path, weights_path, image_path, method, input_path, split = "test";
  std::size_t per_class = kDefaultPerClassCount;
  std::optional<std::size_t> class_index;
  std::vector<std::string> methods = {"occlusion", "gradcam", "ig"};
  TrainConfig train_config;
  std::size_t gradcheck_cases = 100;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen, common);
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--per-class", per_class, "Scenes per class")
      ->check(CLI::Range(std::size_t{10}, std::size_t{100000}))
      ->capture_default_str();

  CLI::App* train = app.add_subcommand("train", "Train GapNet on a generated dataset");
  add_common(train, common);
  train->add_option("--data", data_dir, "Dataset directory from gen-data")->required();
  train->add_option("--out", out_path, "Weight file to write")->required();
  train->add_option("--epochs", train_config.epochs, "Epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", train_config.learning_rate, "Learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train->add_option("--batch", train_config.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CLI::App* attribute_cmd = app.add_subcommand("attribute", "Saliency map for one image");
  add_common(attribute_cmd, common);
  add_attribution_flags(attribute_cmd, attr);
  attribute_cmd->add_option("--weights", weights_path, "Weight file")->required();
  attribute_cmd->add_option("--image", image_path, "Input PGM")->required();
  attribute_cmd->add_option("--method", method, "occlusion, gradcam, cam or ig")
      ->required()
      ->check(CLI::IsMember(method_choices()));
  attribute_cmd->add_option("--class", class_index, "Target class (default: predicted)");
  attribute_cmd->add_option("--out", out_path, "Output path stem")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "Goal report over a dataset split");
  add_common(evaluate, common);
  add_attribution_flags(evaluate, attr);
  evaluate->add_option("--weights", weights_path, "Weight file")->required();
  evaluate->add_option("--data", data_dir, "Dataset directory from gen-data")->required();
  evaluate->add_option("--split", split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  evaluate->add_option("--method", methods, "Methods to compare (comma-separated)")
      ->delimiter(',')
      ->check(CLI::IsMember(method_choices()))
      ->capture_default_str();
  evaluate->add_option("--out", out_path, "Output path stem for .csv and .json")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gradcheck, common);
  gradcheck->add_option("--cases", gradcheck_cases, "Random cases per check")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->capture_default_str();

  CLI::App* export_cmd = app.add_subcommand("export", "Re-export a raw map as PGM files");
  add_common(export_cmd, common);
  export_cmd->add_option("--input", input_path, "Raw map text (.csv)")->required();
  export_cmd->add_option("--image", image_path, "Source image for the overlay");
  export_cmd->add_option("--out", out_path, "Output path stem")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) {
      const fs::path dir(out_path);
      fs::create_directories(dir / "images");
      fs::create_directories(dir / "masks");
      const Dataset data = generate_dataset(per_class, common.seed);
      ojson config = common_json("gen-data", common);
      config["out"] = out_path;
      config["per_class"] = per_class;
      const DatasetOptions options;
      config["dataset"] = {{"image_size", options.image_size},
                           {"low_contrast_fraction", options.low_contrast_fraction},
                           {"distractor_fraction", options.distractor_fraction},
                           {"noise_sigma", options.noise_sigma},
                           {"train_fraction", options.train_fraction}};
      echo_config(config, common, (dir / "config.json").string(), out);
      std::string manifest = std::string(kManifestHeader) + "\n";
      std::size_t index = 0;
      for (const auto* part : {&data.train, &data.test}) {
        const std::string split_name = part == &data.train ? "train" : "test";
        for (const Scene& s : *part) {
          std::ostringstream id;
          id << "scene_" << std::setw(5) << std::setfill('0') << index++;
          write_pgm(s.image, (dir / "images" / (id.str() + ".pgm")).string());
          write_mask_pgm(s.union_mask(), (dir / "masks" / (id.str() + "_mask.pgm")).string());
          manifest += manifest_line({id.str(), s.spec, split_name}) + "\n";
        }
      }
      write_file_bytes((dir / "manifest.csv").string(), manifest);
      out << "wrote " << index << " scenes (" << data.train.size() << " train, "
          << data.test.size() << " test) to " << out_path << "\n";
      return 0;
    }

    if (train->parsed()) {
      train_config.seed = common.seed;
      train_config.workers = common.workers;
      const LoadedScenes scenes = load_scenes(data_dir);
      if (scenes.train.empty()) throw ValidationError("--data: no training scenes in manifest");
      const std::size_t side = scenes.train.front().spec.size;
      ojson config = common_json("train", common);
      config["data"] = data_dir;
      config["out"] = out_path;
      config["architecture"] = "gapnet";
      config["learning_rate"] = train_config.learning_rate;
      config["epochs"] = train_config.epochs;
      config["batch_size"] = train_config.batch_size;
      config["init_seed"] = common.seed;
      ensure_parent(out_path);
      echo_config(config, common, out_path + ".config.json", out);
      const Network init = build_network(gapnet_specs(kSceneClassCount), {1, side, side},
                                         common.seed);
      const auto train_set = to_examples(scenes.train);
      const auto start = std::chrono::steady_clock::now();
      const TrainResult result = train_sgd(init, train_set, train_config);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      save_weights(result.network, out_path);
      std::string log = "epoch,loss\n";
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        log += std::to_string(e + 1) + "," + exact_decimal(result.epoch_losses[e]) + "\n";
      }
      write_file_bytes(out_path + ".loss.csv", log);
      out << "train accuracy " << accuracy(result.network, train_set) << "\n";
      if (!scenes.test.empty()) {
        out << "test accuracy " << accuracy(result.network, to_examples(scenes.test)) << "\n";
      }
      out << "final loss " << result.epoch_losses.back() << ", " << seconds << " s\n";
      return 0;
    }

    if (attribute_cmd->parsed()) {
      const Network net = load_weights(weights_path);
      const Tensor image = read_pgm(image_path);
      const Prediction pred = predict(net, image);
      const std::size_t target = class_index.value_or(pred.class_index);
      if (target >= net.num_classes()) {
        throw ValidationError("--class " + std::to_string(target) + " is out of range for " +
                              std::to_string(net.num_classes()) + " classes");
      }
      const Method m = parse_method(method);
      const AttributionSettings settings = settings_from(attr, common.workers);
      ojson config = common_json("attribute", common);
      config["weights"] = weights_path;
      config["image"] = image_path;
      config["method"] = method;
      config["class"] = target;
      config["predicted_class"] = pred.class_index;
      config["predicted_probability"] = pred.probability;
      config["settings"] = settings_json(settings, image.extent(1));
      ensure_parent(out_path);
      echo_config(config, common, out_path + ".config.json", out);
      const SaliencyMap map = attribute(net, image, target, m, settings);
      const ExportedFiles files = export_saliency(map, out_path, &image);
      if (map.coarse) write_file_bytes(out_path + "_coarse.csv", grid_csv(*map.coarse));
      out << "wrote " << files.raw_csv << ", " << files.normalized_pgm << ", "
          << *files.overlay_pgm << "\n";
      if (m == Method::kIntegratedGradients) {
        const double residual =
            completeness_residual(map, net, image, Tensor(image.shape()), target);
        out << "completeness residual " << residual << "\n";
      }
      return 0;
    }

    if (evaluate->parsed()) {
      const Network net = load_weights(weights_path);
      const LoadedScenes loaded = load_scenes(data_dir);
      std::vector<Scene> scenes;
      if (split != "test") scenes.insert(scenes.end(), loaded.train.begin(), loaded.train.end());
      if (split != "train") scenes.insert(scenes.end(), loaded.test.begin(), loaded.test.end());
      if (scenes.empty()) throw ValidationError("--data: no scenes in split '" + split + "'");
      std::vector<Method> ms;
      for (const std::string& name : methods) ms.push_back(parse_method(name));
      const AttributionSettings settings = settings_from(attr, common.workers);
      const GoalMetricConfig metric_config;
      ojson config = common_json("evaluate", common);
      config["weights"] = weights_path;
      config["data"] = data_dir;
      config["split"] = split;
      config["methods"] = methods;
      config["metrics"] = config_json(metric_config);
      config["settings"] = settings_json(settings, scenes.front().spec.size);
      ensure_parent(out_path);
      echo_config(config, common, "", out);
      const GoalReport report = goal_report(net, scenes, ms, metric_config, settings);
      const std::string csv = report_csv(report);
      write_file_bytes(out_path + ".csv", csv);
      nlohmann::json j = report_json(report, scenes.front().spec.size);
      j["run"] = nlohmann::json::parse(config.dump());
      write_file_bytes(out_path + ".json", j.dump(2) + "\n");
      out << csv;
      return 0;
    }

    if (gradcheck->parsed()) {
      ojson config = common_json("gradcheck", common);
      GradCheckOptions options;
      options.cases_per_layer_kind = gradcheck_cases;
      options.cases_per_model = gradcheck_cases;
      config["cases"] = gradcheck_cases;
      config["step"] = options.step;
      config["tolerance"] = options.tolerance;
      config["kink_margin"] = options.kink_margin;
      echo_config(config, common, "", out);
      const auto results = run_gradcheck(common.seed, options);
      bool all = true;
      out << "check,cases,redrawn,max_rel_error,status\n";
      for (const GradCheckResult& r : results) {
        out << r.name << "," << r.cases << "," << r.resampled << "," << r.max_rel_error << ","
            << (r.passed ? "PASS" : "FAIL") << "\n";
        all = all && r.passed;
      }
      if (!all) {
        err << "error: gradient check failed\n";
        return 2;
      }
      return 0;
    }

    if (export_cmd->parsed()) {
      const Grid grid = read_grid_csv(input_path);
      std::optional<Tensor> image;
      if (!image_path.empty()) image = read_pgm(image_path);
      ojson config = common_json("export", common);
      config["input"] = input_path;
      config["image"] = image_path;
      ensure_parent(out_path);
      echo_config(config, common, out_path + ".config.json", out);
      const ExportedFiles files = export_saliency(grid, out_path, image ? &*image : nullptr);
      out << "wrote " << files.raw_csv << ", " << files.normalized_pgm;
      if (files.overlay_pgm) out << ", " << *files.overlay_pgm;
      out << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace salmap

#endif  // SALMAP_CLI_HPP_
