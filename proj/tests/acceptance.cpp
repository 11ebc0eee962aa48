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

// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "salmap/attribution.hpp"
#include "salmap/goal_eval.hpp"
#include "salmap/gradcheck.hpp"
#include "salmap/pgm.hpp"
#include "salmap/scenes.hpp"
#include "salmap/train.hpp"
#include "salmap/weights_io.hpp"

namespace {

using namespace salmap;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor random_image(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor x(shape);
  for (double& v : x.data()) v = u(rng);
  return x;
}

std::string tmp_path(const std::string& name) {
  const auto dir = std::filesystem::path(SALMAP_ACCEPTANCE_TMPDIR);
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// Shared state: the default dataset and the network trained on it.
struct Trained {
  Dataset data;
  std::optional<Network> net;

  const Network& model() const {
    if (!net) throw RuntimeFailure("no trained network; training did not complete");
    return *net;
  }
};

Outcome gradient_correctness() {
  const auto start = Clock::now();
  const auto results = run_gradcheck(0);
  double worst = 0.0;
  std::size_t cases = 0;
  bool ok = true;
  std::string names;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.passed && r.cases >= 100;
    cases += r.cases;
    if (!r.passed) names += " " + r.name;
  }
  const double t = seconds_since(start);
  ok = ok && t < 60.0;
  return {ok, std::to_string(results.size()) + " checks, " + std::to_string(cases) +
                  " cases, max rel error " + fmt(worst) + " (tol 1e-4), " + fmt(t) + " s" +
                  (names.empty() ? "" : ", failing:" + names)};
}

Outcome cam_equals_gradcam(const Trained& trained) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2);
  double worst_w = 0.0, worst_map = 0.0;
  std::size_t inputs = 0;
  auto check = [&](const Network& net, const Tensor& x) {
    ++inputs;
    for (std::size_t c = 0; c < net.num_classes(); ++c) {
      const SaliencyMap g = gradcam_map(net, x, c);
      const SaliencyMap cam = cam_map(net, x, c);
      for (std::size_t k = 0; k < g.channel_weights.size(); ++k) {
        worst_w = std::max(worst_w, relative_error(g.channel_weights[k], cam.channel_weights[k]));
      }
      for (std::size_t i = 0; i < g.coarse->values.size(); ++i) {
        worst_map = std::max(worst_map, relative_error(g.coarse->values[i], cam.coarse->values[i]));
      }
    }
  };
  for (std::size_t n = 0; n < 5; ++n) {
    const Network net = build_network(gapnet_specs(4), {1, 64, 64}, 100 + n);
    for (std::size_t i = 0; i < 10; ++i) check(net, random_image({1, 64, 64}, rng));
  }
  for (std::size_t i = 0; i < 10; ++i) check(trained.model(), trained.data.test[i].image);
  const double t = seconds_since(start);
  const bool ok = inputs >= 50 && worst_w <= 1e-8 && worst_map <= 1e-8 && t < 60.0;
  return {ok, std::to_string(inputs) + " inputs x all classes, max rel error weights " +
                  fmt(worst_w) + ", coarse maps " + fmt(worst_map) + " (tol 1e-8), " + fmt(t) +
                  " s"};
}

Outcome ig_completeness(const Trained& trained) {
  const auto start = Clock::now();
  const std::size_t scenes = 30;
  double worst_ratio = 0.0;
  std::size_t monotone = 0;
  for (std::size_t i = 0; i < scenes; ++i) {
    const Scene& s = trained.data.test[i * trained.data.test.size() / scenes];
    const auto c = static_cast<std::size_t>(s.label);
    const Tensor zero(s.image.shape());
    auto residual = [&](std::size_t m) {
      IGConfig config;
      config.steps = m;
      return completeness_residual(integrated_gradients_map(trained.model(), s.image, c, config),
                                   trained.model(), s.image, zero, c);
    };
    const double gap = class_score(trained.model(), s.image, c, ScoreSource::kLogit) -
                       class_score(trained.model(), zero, c, ScoreSource::kLogit);
    worst_ratio = std::max(worst_ratio, std::abs(residual(300)) / std::abs(gap));
    if (std::abs(residual(200)) <= std::abs(residual(10))) ++monotone;
  }
  const double t = seconds_since(start);
  const bool ok = worst_ratio <= 0.05 && monotone == scenes && t < 300.0;
  return {ok, std::to_string(scenes) + " test scenes, worst |residual(300)| / |F(x) - F(0)| " +
                  fmt(worst_ratio) + " (tol 0.05), |r200| <= |r10| on " +
                  std::to_string(monotone) + "/" + std::to_string(scenes) + ", " + fmt(t) + " s"};
}

Outcome ig_linear_exactness() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    const Shape in = {1, 3 + 2 * n, 3 + 2 * n};
    const std::size_t features = in[1] * in[2];
    Network net({Flatten{}, Dense{features, 3}}, in);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Tensor w({3, features}), b({3});
    for (double& v : w.data()) v = u(rng);
    for (double& v : b.data()) v = u(rng);
    net.set_parameters(1, w, b);
    const Tensor x = random_image(in, rng);
    const Tensor baseline = random_image(in, rng);
    for (std::size_t m : {1u, 7u, 64u}) {
      IGConfig config;
      config.steps = m;
      config.baseline = baseline;
      for (std::size_t c = 0; c < 3; ++c) {
        const SaliencyMap map = integrated_gradients_map(net, x, c, config);
        for (std::size_t i = 0; i < features; ++i) {
          worst = std::max(worst, std::abs(map.values[i] - w[c * features + i] * (x[i] - baseline[i])));
        }
      }
    }
  }
  return {worst <= 1e-10, "3 linear nets, m in {1, 7, 64}, max |IG - grad * (x - x')| " +
                              fmt(worst) + " (tol 1e-10)"};
}

Outcome axioms(const Trained& trained) {
  double worst_probe = 0.0;
  std::size_t probes = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const Scene& s = trained.data.test[i * 7];
    const auto c = static_cast<std::size_t>(s.label);
    const Mask m = s.union_mask();
    // The middle object pixel and one background-side pixel, each set to zero.
    std::vector<std::size_t> on;
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m.bits[p]) on.push_back(p);
    }
    const std::vector<std::size_t> picks = {on[on.size() / 2], (i * 613 + 5) % m.size()};
    for (std::size_t p : picks) {
      const std::size_t y = p / m.width, x = p % m.width;
      Tensor baseline = s.image;
      baseline.at(0, y, x) = 0.0;
      const double delta = class_score(trained.model(), s.image, c, ScoreSource::kLogit) -
                           class_score(trained.model(), baseline, c, ScoreSource::kLogit);
      if (delta == 0.0) continue;
      const double probe = sensitivity_probe(trained.model(), s.image, baseline, y, x, c);
      worst_probe = std::max(worst_probe, std::abs(probe - delta) / std::abs(delta));
      ++probes;
    }
  }
  std::mt19937_64 rng(5);
  std::vector<std::size_t> p1(8), p2(16);
  std::iota(p1.begin(), p1.end(), std::size_t{0});
  std::iota(p2.begin(), p2.end(), std::size_t{0});
  std::shuffle(p1.begin(), p1.end(), rng);
  std::shuffle(p2.begin(), p2.end(), rng);
  const Network twin = permute_channels(permute_channels(trained.model(), 0, p1), 3, p2);
  double worst_perm = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const Scene& s = trained.data.test[i * 11];
    for (std::size_t c = 0; c < trained.model().num_classes(); ++c) {
      const SaliencyMap a = integrated_gradients_map(trained.model(), s.image, c);
      const SaliencyMap b = integrated_gradients_map(twin, s.image, c);
      for (std::size_t k = 0; k < a.values.size(); ++k) {
        worst_perm = std::max(worst_perm, std::abs(a.values[k] - b.values[k]));
      }
    }
  }
  const bool ok = probes > 0 && worst_probe <= 0.05 && worst_perm <= 1e-8;
  return {ok, std::to_string(probes) + " single-pixel probes, worst relative gap " +
                  fmt(worst_probe) + " (tol 0.05); permuted-twin IG max diff " +
                  fmt(worst_perm) + " (tol 1e-8)"};
}

Outcome desk_training(Trained& trained) {
  const auto start = Clock::now();
  trained.data = generate_dataset(kDefaultPerClassCount, 0);
  const auto train_set = to_examples(trained.data.train);
  const auto test_set = to_examples(trained.data.test);
  const Network init = build_network(gapnet_specs(kSceneClassCount), {1, 64, 64}, 0);
  const TrainResult first = train_sgd(init, train_set, TrainConfig{});
  const double t = seconds_since(start);
  trained.net = first.network;
  const TrainResult second = train_sgd(init, train_set, TrainConfig{});
  const bool same = first.network == second.network && first.epoch_losses == second.epoch_losses;
  const double train_acc = accuracy(first.network, train_set);
  const double test_acc = accuracy(first.network, test_set);
  const bool ok = train_acc >= 0.95 && test_acc >= 0.85 && t < 300.0 && same;
  const TrainConfig cfg;
  return {ok, std::to_string(trained.data.train.size()) + "/" +
                  std::to_string(trained.data.test.size()) + " scenes, " +
                  std::to_string(cfg.epochs) + " epochs, train accuracy " + fmt(train_acc) +
                  " (>= 0.95), test accuracy " + fmt(test_acc) + " (>= 0.85), " + fmt(t) +
                  " s incl. generation (< 300), rerun bitwise identical: " +
                  (same ? "yes" : "no")};
}

Outcome directional_pattern(const Trained& trained) {
  const auto start = Clock::now();
  const std::size_t n = 30;
  const Method methods[] = {Method::kOcclusion, Method::kGradCAM, Method::kIntegratedGradients};
  // Per-method pass rate or median of `metric` over the goal's family.
  auto evaluate = [&](Goal goal, const std::function<double(const SceneMetrics&)>& metric,
                      bool rate) {
    const auto scenes = family_scenes(goal, n, 7000 + static_cast<std::uint64_t>(goal));
    std::vector<double> out;
    for (Method m : methods) {
      std::vector<double> values;
      for (const Scene& s : scenes) {
        const SaliencyMap map = attribute(trained.model(), s.image, static_cast<std::size_t>(s.label), m);
        values.push_back(metric(score_scene(map, s)));
      }
      out.push_back(rate ? std::accumulate(values.begin(), values.end(), 0.0) / values.size()
                         : median(values));
    }
    return out;  // occlusion, gradcam, ig
  };
  const auto objects = evaluate(Goal::kMultipleObjects,
                                [](const SceneMetrics& m) { return m.objects.passed ? 1.0 : 0.0; }, true);
  const auto features = evaluate(Goal::kMultipleFeatures,
                                 [](const SceneMetrics& m) { return m.features.passed ? 1.0 : 0.0; }, true);
  const auto iou = evaluate(Goal::kObjectShape, [](const SceneMetrics& m) { return m.iou; }, false);
  const auto distract = evaluate(Goal::kHighContrastClarity,
                                 [](const SceneMetrics& m) { return m.clarity; }, false);
  const auto lowcon = evaluate(Goal::kLowContrastClarity,
                               [](const SceneMetrics& m) { return m.clarity; }, false);
  const bool rows12 = objects[0] < objects[2] && features[0] < features[2];
  const bool row3 = iou[1] < iou[0] && iou[1] < iou[2];
  const bool row5 = distract[2] < distract[0] && distract[2] < distract[1];
  const bool row6 = lowcon[2] < lowcon[0] && lowcon[2] < lowcon[1];
  const double t = seconds_since(start);
  auto triple = [](const std::vector<double>& v) {
    return "occ " + fmt(v[0]) + " / gc " + fmt(v[1]) + " / ig " + fmt(v[2]);
  };
  std::string detail = std::to_string(n) + " scenes per family; multi-object pass rate " +
                       triple(objects) + (rows12 ? "" : " [miss]") +
                       "; multi-feature pass rate " + triple(features) +
                       "; oval median IoU " + triple(iou) + (row3 ? "" : " [miss]") +
                       "; distractor median clarity " + triple(distract) +
                       (row5 ? "" : " [miss]") + "; low-contrast median clarity " +
                       triple(lowcon) + (row6 ? "" : " [miss]") + "; " + fmt(t) + " s";
  return {rows12 && row3 && row5 && row6, detail};
}

Outcome determinism(const Trained& trained) {
  const std::string path = tmp_path("acceptance.smlw");
  save_weights(trained.model(), path);
  const Network loaded = load_weights(path);
  bool logits_same = true;
  for (std::size_t i = 0; i < 20; ++i) {
    const Tensor& x = trained.data.test[i].image;
    logits_same = logits_same &&
                  network_forward(trained.model(), x).logits == network_forward(loaded, x).logits;
  }

  bool maps_same = true;
  const Scene& s = trained.data.test.front();
  const auto c = static_cast<std::size_t>(s.label);
  IGConfig ig1;
  OcclusionConfig oc1;
  oc1.stride = 2;
  const auto ig_ref = integrated_gradients_map(trained.model(), s.image, c, ig1).values;
  const auto oc_ref = occlusion_map(trained.model(), s.image, c, oc1).values;
  const auto gc_ref = gradcam_map(trained.model(), s.image, c).values;
  for (std::size_t workers : {2u, 3u, 8u}) {
    IGConfig ig = ig1;
    ig.workers = workers;
    OcclusionConfig oc = oc1;
    oc.workers = workers;
    maps_same = maps_same && integrated_gradients_map(trained.model(), s.image, c, ig).values == ig_ref;
    maps_same = maps_same && occlusion_map(trained.model(), s.image, c, oc).values == oc_ref;
    maps_same = maps_same && gradcam_map(trained.model(), s.image, c).values == gc_ref;
  }
  const auto examples = to_examples(trained.data.train);
  const std::vector<Example> small(examples.begin(), examples.begin() + 40);
  TrainConfig one, four;
  one.epochs = four.epochs = 2;
  four.workers = 4;
  const Network init = build_network(gapnet_specs(kSceneClassCount), {1, 64, 64}, 3);
  const bool train_same = train_sgd(init, small, one).network == train_sgd(init, small, four).network;

  double worst_pgm = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::string img = tmp_path("acceptance_" + std::to_string(i) + ".pgm");
    write_pgm(trained.data.test[i].image, img);
    const Tensor back = read_pgm(img);
    for (std::size_t k = 0; k < back.size(); ++k) {
      worst_pgm = std::max(worst_pgm, std::abs(back[k] - trained.data.test[i].image[k]));
    }
  }
  const bool ok = logits_same && maps_same && train_same && worst_pgm <= 1.0 / 65535.0;
  return {ok, std::string("weights round trip logits bitwise: ") + (logits_same ? "yes" : "no") +
                  "; maps bitwise across 1/2/3/8 workers: " + (maps_same ? "yes" : "no") +
                  "; training across 1/4 workers: " + (train_same ? "yes" : "no") +
                  "; PGM round trip max error " + fmt(worst_pgm * 65535.0) + "/65535 (tol 1)"};
}

}  // namespace

int main() {
  Trained trained;
  struct Row {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // Training runs first; later criteria use the trained network.
  const std::vector<Row> rows = {
      {6, "desk-scale training", [&] { return desk_training(trained); }},
      {1, "gradient correctness", [] { return gradient_correctness(); }},
      {2, "CAM equals Grad-CAM on GapNet", [&] { return cam_equals_gradcam(trained); }},
      {3, "IG completeness", [&] { return ig_completeness(trained); }},
      {4, "IG exact on linear networks", [] { return ig_linear_exactness(); }},
      {5, "IG axioms", [&] { return axioms(trained); }},
      {7, "directional goal pattern", [&] { return directional_pattern(trained); }},
      {8, "determinism and round trips", [&] { return determinism(trained); }},
  };
  int failures = 0;
  for (const Row& row : rows) {
    Outcome o;
    try {
      o = row.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", row.id, row.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(rows.size()) - failures, rows.size());
  return failures == 0 ? 0 : 1;
}
