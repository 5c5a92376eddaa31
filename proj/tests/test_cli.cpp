// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mmr_cli_test";

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt";
  const std::string cmd = std::string(MMR_CLI) + " " + args + " > " + out.string() + " 2> " + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  std::ifstream is(out);
  std::stringstream ss;
  ss << is.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

const std::string kTiny = std::string(MMR_CONFIG_DIR) + "/tiny.ini";

}  // namespace

TEST_CASE("cli exit codes", "[cli]") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --config " + kTiny).code == 1);
  CHECK(cli("train --config /nonexistent.ini --out-dir " + (kRoot / "x").string()).code == 1);
  const auto bad_key = write_config("bad.ini", "[model]\nwidth = 4\n");
  CHECK(cli("train --config " + bad_key.string() + " --out-dir " + (kRoot / "x").string()).code == 1);
  CHECK(cli("train --config " + kTiny + " --eta 2.0 --out-dir " + (kRoot / "x").string()).code == 1);
  CHECK(cli("eval --checkpoint " + (kRoot / "missing.ckpt").string()).code == 2);
  const auto diverge = write_config(
      "diverge.ini", "[data]\npreset = tiny\n[model]\nlayers = 2\nd_model = 8\nd_ff = 8\n[training]\nlr = 1e200\n");
  CHECK(cli("train --config " + diverge.string() + " --out-dir " + (kRoot / "div").string()).code == 2);
  CHECK(fs::exists(kRoot / "div" / "model.ckpt"));
  CHECK(slurp(kRoot / "div" / "model.ckpt").find("meta status diverged") != std::string::npos);
}

TEST_CASE("train is byte-reproducible and honours --seed", "[cli]") {
  const fs::path a = kRoot / "a", b = kRoot / "b", c = kRoot / "c";
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
  REQUIRE(cli("train --config " + kTiny + " --seed 4 --out-dir " + a.string()).code == 0);
  REQUIRE(cli("train --config " + kTiny + " --seed 4 --out-dir " + b.string()).code == 0);
  REQUIRE(cli("train --config " + kTiny + " --seed 5 --out-dir " + c.string()).code == 0);
  for (const char* f : {"model.ckpt", "results.csv", "train_log.csv", "config.ini", "seed.txt"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "seed.txt") == "4\n");
  CHECK(slurp(a / "model.ckpt") != slurp(c / "model.ckpt"));

  const auto res = lines(slurp(a / "results.csv"));
  REQUIRE(res.size() == 5);
  CHECK(res[0] == "# results-schema: 1");
  CHECK(res[1] == "dataset,seed,policy,eta,metric,value,delta");
  CHECK(split(res[2])[0] == "tiny");
  CHECK(split(res[2])[1] == "4");
  CHECK(split(res[2])[2] == "11");
  CHECK(split(res[2])[6] == "0");
  CHECK(lines(slurp(a / "train_log.csv"))[0] == "step,loss_m1,loss_m2,loss_joint,total");
}

TEST_CASE("eval re-scores a checkpoint over a given grid", "[cli]") {
  const fs::path a = kRoot / "ev";
  fs::remove_all(a);
  REQUIRE(cli("train --config " + kTiny + " --out-dir " + a.string()).code == 0);
  const Run one = cli("eval --checkpoint " + (a / "model.ckpt").string() + " --eta 1.0");
  REQUIRE(one.code == 0);
  const auto rows = lines(one.out);
  REQUIRE(rows.size() == 3);
  CHECK(split(rows[2])[3] == "1");
  CHECK(split(rows[2])[6] == "0");
  const fs::path out = kRoot / "ev_out";
  REQUIRE(cli("eval --checkpoint " + (a / "model.ckpt").string() + " --out-dir " + out.string()).code == 0);
  CHECK(slurp(out / "results.csv") == slurp(a / "results.csv"));

  const auto other = write_config("other.ini", "[data]\npreset = tiny\n[model]\nlayers = 3\nd_model = 8\nd_ff = 16\n");
  CHECK(cli("eval --checkpoint " + (a / "model.ckpt").string() + " --config " + other.string()).code == 1);
  CHECK(cli("eval --checkpoint " + (a / "model.ckpt").string() + " --config " + kTiny).code == 0);
}

TEST_CASE("sweep aggregates per-seed results", "[cli]") {
  const fs::path s = kRoot / "sweep";
  fs::remove_all(s);
  REQUIRE(cli("sweep --config " + kTiny + " --seed 0,1 --seed 2 --eta 1.0 --out-dir " + s.string()).code == 0);
  std::vector<double> values;
  for (int seed : {0, 1, 2}) {
    const auto res = lines(slurp(s / ("seed_" + std::to_string(seed)) / "results.csv"));
    REQUIRE(res.size() == 3);
    values.push_back(std::stod(split(res[2])[5]));
  }
  const auto agg = lines(slurp(s / "aggregate.csv"));
  REQUIRE(agg.size() == 3);
  CHECK(agg[1] == "dataset,mode,eta,metric,n_seeds,mean,min,max");
  const auto f = split(agg[2]);
  CHECK(f[4] == "3");
  CHECK(std::stod(f[5]) == Catch::Approx((values[0] + values[1] + values[2]) / 3.0).epsilon(1e-9));
  CHECK(std::stod(f[6]) == *std::min_element(values.begin(), values.end()));
  CHECK(lines(slurp(s / "plot_data.csv")).size() == 1 + 3 + 1);
}

TEST_CASE("search-history reads the trajectory from a search checkpoint", "[cli]") {
  const auto cfg = write_config("search.ini",
                                "[experiment]\nmode = multitask_search\n[data]\npreset = tiny\n"
                                "[model]\nlayers = 3\nheads = 1\nd_model = 4\nd_ff = 8\n"
                                "[training]\nepochs = 1\n[search]\nmax_outer_steps = 6\npatience = 50\n"
                                "batch_size = 8\n[eval]\netas = 1.0\n");
  const fs::path d = kRoot / "search";
  fs::remove_all(d);
  REQUIRE(cli("train --config " + cfg.string() + " --out-dir " + d.string()).code == 0);
  const Run h = cli("search-history --checkpoint " + (d / "model.ckpt").string());
  REQUIRE(h.code == 0);
  const auto rows = lines(h.out);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "outer_step,argmax,s_s_0,s_s_1,s_s_2,val_loss");
  CHECK(split(rows[6])[0] == "5");
  CHECK(h.out == slurp(d / "search_history.csv"));

  CHECK(cli("search-history --checkpoint " + (kRoot / "a" / "model.ckpt").string()).code == 2);
}

TEST_CASE("masks prints 0/1 grids per layer", "[cli]") {
  const Run r = cli("masks --layers 2 --fusion-index 1 --len1 1 --len2 1");
  REQUIRE(r.code == 0);
  CHECK(r.out ==
        "# layer 0 fused 0\n10000\n01010\n00101\n00010\n00001\n"
        "# layer 1 fused 1\n10011\n01010\n00101\n10011\n10011\n");
  CHECK(cli("masks --layers 2 --fusion-index 2").code == 1);
}
