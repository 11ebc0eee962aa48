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

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "salmap/cli.hpp"

namespace salmap {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  fs::create_directories(SALMAP_TEST_TMPDIR);
  return (fs::path(SALMAP_TEST_TMPDIR) / name).string();
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "salmap");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

TEST(Pgm, RandomRoundTripWithinQuantisation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({1, 17, 23});
  for (double& v : img.data()) v = u(rng);
  img[0] = 0.0;
  img[1] = 1.0;
  const std::string path = temp_path("random.pgm");
  write_pgm(img, path);
  const Tensor back = read_pgm(path);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back[i] - img[i]), 1.0 / 65535);
  EXPECT_EQ(back[0], 0.0);
  EXPECT_EQ(back[1], 1.0);
}

TEST(Pgm, EightBitFilesAndComments) {
  const std::string path = temp_path("eight.pgm");
  write_file_bytes(path, std::string("P5\n# note\n3 1\n255\n") + '\0' + '\x80' + '\xff');
  const Tensor t = read_pgm(path);
  EXPECT_EQ(t.shape(), (Shape{1, 1, 3}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 128.0 / 255.0);
  EXPECT_EQ(t[2], 1.0);
}

TEST(Pgm, MalformedFilesReportOffsets) {
  const std::string ascii = temp_path("ascii.pgm");
  write_file_bytes(ascii, "P2\n2 2\n255\n0 0 0 0\n");
  EXPECT_THROW(read_pgm(ascii), FormatError);

  const std::string empty = temp_path("empty.pgm");
  write_file_bytes(empty, "");
  try {
    read_pgm(empty);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  const std::string truncated = temp_path("truncated.pgm");
  write_file_bytes(truncated, "P5\n4 4\n65535\n" + std::string(10, '\x01'));
  try {
    read_pgm(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GE(e.offset(), 13u);
    EXPECT_NE(std::string(e.what()).find(truncated), std::string::npos);
  }

  const std::string bad_max = temp_path("badmax.pgm");
  write_file_bytes(bad_max, "P5\n1 1\n70000\n\0\0");
  EXPECT_THROW(read_pgm(bad_max), FormatError);
  EXPECT_THROW(read_pgm(temp_path("does_not_exist.pgm")), ValidationError);
  EXPECT_THROW(write_pgm(Tensor({1, 2, 2}, 1.5), temp_path("range.pgm")), ValidationError);
}

TEST(Mask, PgmRoundTrip) {
  Mask m(5, 7);
  m.set(0, 0);
  m.set(4, 6);
  m.set(2, 3);
  const std::string path = temp_path("mask.pgm");
  write_mask_pgm(m, path);
  EXPECT_EQ(read_mask_pgm(path), m);
  const PgmImage raw = read_pgm_samples(path);
  EXPECT_EQ(raw.maxval, 255u);
  for (std::uint16_t v : raw.samples) EXPECT_TRUE(v == 0 || v == 255);
}

TEST(Export, ConstantMapGivesZeroImage) {
  const Grid g{4, 5, std::vector<double>(20, 3.25)};
  const ExportedFiles f = export_saliency(g, temp_path("constant"));
  EXPECT_FALSE(f.overlay_pgm.has_value());
  for (std::uint16_t v : read_pgm_samples(f.normalized_pgm).samples) EXPECT_EQ(v, 0u);
}

TEST(Export, RawTextRoundTripIsExact) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1e-3);
  Grid g{6, 9, std::vector<double>(54)};
  for (double& v : g.values) v = n(rng);
  g.values[3] = 1e-310;  // subnormal
  g.values[4] = -0.0;
  const ExportedFiles f = export_saliency(g, temp_path("exact"));
  const Grid back = read_grid_csv(f.raw_csv);
  EXPECT_EQ(back.height, 6u);
  EXPECT_EQ(back.width, 9u);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[i]), std::bit_cast<std::uint64_t>(g.values[i]));
  }
}

TEST(Export, OverlayIsHalfImageHalfMap) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid g{8, 8, std::vector<double>(64)};
  for (double& v : g.values) v = u(rng) * 4 - 1;
  Tensor img({1, 8, 8});
  for (double& v : img.data()) v = u(rng);
  const ExportedFiles f = export_saliency(g, temp_path("overlay"), &img);
  ASSERT_TRUE(f.overlay_pgm.has_value());
  const Tensor overlay = read_pgm(*f.overlay_pgm);
  const Tensor norm = read_pgm(f.normalized_pgm);
  const double lo = *std::min_element(g.values.begin(), g.values.end());
  const double hi = *std::max_element(g.values.begin(), g.values.end());
  for (std::size_t i = 0; i < 64; ++i) {
    const double n = (g.values[i] - lo) / (hi - lo);
    EXPECT_LE(std::abs(norm[i] - n), 0.5 / 65535 + 1e-12);
    EXPECT_LE(std::abs(overlay[i] - (0.5 * img[i] + 0.5 * n)), 0.5 / 65535 + 1e-12);
  }
  Tensor wrong({1, 4, 4});
  EXPECT_THROW(export_saliency(g, temp_path("overlay_bad"), &wrong), ShapeError);
}

TEST(Manifest, LineRoundTrip) {
  ManifestRow row{"scene_00001", {}, "test"};
  row.spec.label = SceneClass::kCurveChain;
  row.spec.contrast = 0.1234567890123;
  row.spec.distractors = 2;
  row.spec.noise_sigma = 0.01;
  row.spec.seed = 18446744073709551557ULL;
  const std::string path = temp_path("manifest.csv");
  write_file_bytes(path, std::string(kManifestHeader) + "\n" + manifest_line(row) + "\n");
  const auto rows = read_manifest(path);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].id, row.id);
  EXPECT_EQ(rows[0].spec, row.spec);
  EXPECT_EQ(rows[0].split, "test");
  write_file_bytes(path, std::string(kManifestHeader) + "\nscene_1,blob,1,1\n");
  EXPECT_THROW(read_manifest(path), FormatError);
}

TEST(Cli, GradcheckPasses) {
  const CliRun r = run({"gradcheck", "--seed", "0"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("check,cases,redrawn,max_rel_error,status"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("GapNet,100,"), std::string::npos);
  EXPECT_NE(r.out.find("\"seed\":0"), std::string::npos);
}

TEST(Cli, ValidationErrorsExitOne) {
  const CliRun steps = run({"attribute", "--method", "ig", "--steps", "0", "--weights", "w",
                            "--image", "i", "--out", "o"});
  EXPECT_EQ(steps.code, 1);
  EXPECT_NE(steps.err.find("--steps"), std::string::npos);
  const CliRun unknown = run({"gradcheck", "--bogus", "1"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("--bogus"), std::string::npos);
  const CliRun method = run({"attribute", "--method", "lime", "--weights", "w", "--image", "i",
                             "--out", "o"});
  EXPECT_EQ(method.code, 1);
  EXPECT_NE(method.err.find("--method"), std::string::npos);
  const std::string missing = temp_path("missing.smlw");
  const CliRun file = run({"attribute", "--method", "ig", "--weights", missing, "--image", "i",
                           "--out", temp_path("o")});
  EXPECT_EQ(file.code, 1);
  EXPECT_NE(file.err.find(missing), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  const std::string weights = temp_path("small.smlw");
  save_weights(build_network(gapnet_specs(4), {1, 16, 16}, 0), weights);
  const std::string image = temp_path("small.pgm");
  write_pgm(Tensor({1, 16, 16}, 0.5), image);
  const std::string blocker = temp_path("blocker");
  write_file_bytes(blocker, "x");
  const CliRun r = run({"attribute", "--method", "cam", "--weights", weights, "--image", image,
                        "--out", blocker + "/sub/map"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, EndToEndPipeline) {
  const std::string data = temp_path("cli_data");
  fs::remove_all(data);
  const CliRun gen = run({"gen-data", "--out", data, "--per-class", "10", "--seed", "3"});
  ASSERT_EQ(gen.code, 0) << gen.err;
  EXPECT_TRUE(fs::exists(fs::path(data) / "manifest.csv"));
  EXPECT_TRUE(fs::exists(fs::path(data) / "images" / "scene_00000.pgm"));
  EXPECT_TRUE(fs::exists(fs::path(data) / "masks" / "scene_00000_mask.pgm"));
  EXPECT_EQ(read_manifest((fs::path(data) / "manifest.csv").string()).size(), 40u);

  const std::string w1 = temp_path("cli_w1.smlw"), w2 = temp_path("cli_w2.smlw");
  const std::vector<std::string> train = {"train", "--data", data, "--epochs", "2",
                                          "--seed", "5", "--batch", "4"};
  auto t1 = train, t2 = train;
  t1.insert(t1.end(), {"--out", w1});
  t2.insert(t2.end(), {"--out", w2, "--workers", "2"});
  const CliRun r1 = run(t1), r2 = run(t2);
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(slurp(w1), slurp(w2));
  EXPECT_TRUE(fs::exists(w1 + ".loss.csv"));
  EXPECT_NE(slurp(w1 + ".config.json").find("\"learning_rate\""), std::string::npos);

  const std::string image = (fs::path(data) / "images" / "scene_00000.pgm").string();
  for (const std::string method : {"occlusion", "gradcam", "cam", "ig"}) {
    const std::string stem = temp_path("cli_map_" + method);
    const CliRun a = run({"attribute", "--method", method, "--weights", w1, "--image", image,
                          "--out", stem, "--stride", "4", "--steps", "8", "--class", "1"});
    ASSERT_EQ(a.code, 0) << method << ": " << a.err;
    EXPECT_TRUE(fs::exists(stem + ".csv"));
    EXPECT_TRUE(fs::exists(stem + "_overlay.pgm"));
    EXPECT_NE(slurp(stem + ".config.json").find("\"class\": 1"), std::string::npos);
  }
  const std::string stem = temp_path("cli_reexport");
  const CliRun ex = run({"export", "--input", temp_path("cli_map_ig") + ".csv", "--image", image,
                         "--out", stem});
  ASSERT_EQ(ex.code, 0) << ex.err;
  EXPECT_EQ(slurp(stem + ".pgm"), slurp(temp_path("cli_map_ig") + ".pgm"));

  const std::string report = temp_path("cli_report");
  const std::string echo = temp_path("cli_report_config.json");
  const CliRun ev = run({"evaluate", "--weights", w1, "--data", data, "--method", "gradcam,cam",
                         "--out", report, "--config-echo", echo});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(slurp(report + ".csv").find("goal,method,evaluated,passed,rate"), std::string::npos);
  EXPECT_NE(slurp(report + ".json").find("attribution_threshold_quantile"), std::string::npos);
  EXPECT_NE(slurp(echo).find("\"split\": \"test\""), std::string::npos);
}

}  // namespace
}  // namespace salmap
