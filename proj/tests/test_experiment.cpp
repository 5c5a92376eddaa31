// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmrobust/experiment.hpp"

using namespace mmr;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

const char* kTiny =
    "[experiment]\nmode = multitask\nseed = 3\n"
    "[data]\npreset = tiny\n"
    "[model]\nlayers = 2\nheads = 2\nd_model = 8\nd_ff = 16\n"
    "[training]\nepochs = 1\nbatch_size = 16\nlr = 0.003\n"
    "[eval]\netas = 1.0,0.5\n";

}  // namespace

TEST_CASE("config parsing fills every sub-config", "[config]") {
  const ExperimentConfig c = parse(kTiny);
  CHECK(c.mode == Mode::multitask);
  CHECK(c.seed == 3);
  CHECK(c.name == "tiny");
  CHECK(c.data.n_samples == 120);
  CHECK(c.model.layers == 2);
  CHECK(c.model.n_classes == c.data.n_classes);
  CHECK(c.encoder.d_model == 8);
  CHECK(c.encoder.max_len1 == c.data.len1);
  CHECK(c.training.adam.lr == 0.003);
  CHECK(c.eval.etas == std::vector<double>{1.0, 0.5});
  CHECK(c.eval.rule == HeadRule::availability);
  CHECK(c.fixed_policy() == std::vector<int>{1, 1});
}

TEST_CASE("baseline defaults to the joint head and joint-only weights", "[config]") {
  const ExperimentConfig c = parse(std::string(kTiny) + "[weights]\nlambda1 = 1\n" + "[policy]\nfusion_index = 1\n");
  CHECK(c.fixed_policy() == std::vector<int>{0, 1});
  std::string text = kTiny;
  text.replace(text.find("multitask"), 9, "baseline");
  const ExperimentConfig b = parse(text);
  CHECK(b.eval.rule == HeadRule::joint_only);
  const RunOutcome out = run_train(b, "");
  for (const auto& row : out.log.log) {
    CHECK(row.report.loss_m1 == 0.0);
    CHECK(row.report.loss_m2 == 0.0);
    CHECK(row.report.total == row.report.loss_joint);
  }
}

TEST_CASE("config errors name the offending field", "[config]") {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("[data]\npreset = tiny\n[model]\nwidth = 3\n").find("width") != std::string::npos);
  CHECK(message(std::string(kTiny) + "[bogus]\nx = 1\n").find("bogus") != std::string::npos);
  CHECK(message("[data]\npreset = tiny\n[model]\nlayers = 2\n[model]\nheads = 1\n") != "no error");
  CHECK(message(std::string(kTiny) + "[search]\nseed = 4\n").find("seed") != std::string::npos);
  CHECK(message("[experiment]\nmode = train\n").find("mode") != std::string::npos);
  CHECK(message(std::string(kTiny) + "[policy]\nfusion_index = 2\n").find("fusion_index") != std::string::npos);
  CHECK(message("[data]\npreset = tiny\n[training]\nlr = fast\n").find("lr") != std::string::npos);
  CHECK(message("[data]\npreset = tiny\n[model]\nheads = 3\nd_model = 8\n") != "no error");
  CHECK_THROWS_AS(load_config("/nonexistent/x.ini"), ConfigError);
}

TEST_CASE("written configs parse back to the same map", "[config][property]") {
  for (const char* f : {"tiny.ini", "dominant_baseline.ini", "dominant_multitask.ini", "xor_search.ini",
                        "dominant_search.ini"}) {
    const ExperimentConfig c = load_config(std::string(MMR_CONFIG_DIR) + "/" + f);
    std::ostringstream os;
    write_config(os, c);
    INFO(f);
    CHECK(parse(os.str()).to_map() == c.to_map());
  }
}

TEST_CASE("number lists", "[config]") {
  CHECK(parse_number_list("1, 0.5,0") == std::vector<double>{1.0, 0.5, 0.0});
  CHECK_THROWS(parse_number_list("1,,2"));
  CHECK_THROWS(parse_number_list("x"));
}

TEST_CASE("run_train writes a complete run directory and eval reproduces it", "[config][run]") {
  const auto dir = std::filesystem::temp_directory_path() / "mmr_run_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = parse(kTiny);
  const RunOutcome out = run_train(c, dir.string());
  for (const char* f : {"config.ini", "seed.txt", "model.ckpt", "train_log.csv", "results.csv"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK_FALSE(std::filesystem::exists(dir / "search_history.csv"));
  const auto again = run_eval(load_checkpoint((dir / "model.ckpt").string()), std::nullopt);
  REQUIRE(again.size() == out.reports.size());
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].metrics == out.reports[i].metrics);
  const auto rows = aggregate("tiny", Mode::multitask, out.reports);
  CHECK(rows.size() == 2);
  CHECK(rows[0].n == 1);
  CHECK(rows[0].min == rows[0].max);
  std::filesystem::remove_all(dir);
}
