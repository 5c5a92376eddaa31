// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// mmrobust: train, evaluate and sweep missing-modality experiments.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmrobust/checkpoint.hpp"
#include "mmrobust/experiment.hpp"
#include "mmrobust/masks.hpp"
#include "mmrobust/policy.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::vector<double>> eta_grid(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return mmr::parse_number_list(s);
  } catch (const std::exception& e) {
    throw UsageError(std::string("--eta: ") + e.what());
  }
}

std::vector<std::uint64_t> seed_list(const std::vector<std::string>& raw) {
  std::vector<std::uint64_t> out;
  for (const auto& item : raw) {
    for (double v : mmr::parse_number_list(item)) {
      if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
        throw UsageError("--seed: '" + item + "' is not a non-negative integer");
      }
      out.push_back(static_cast<std::uint64_t>(v));
    }
  }
  return out;
}

mmr::ExperimentConfig config_with_overrides(const std::string& path, const std::vector<std::uint64_t>& seeds,
                                            const std::optional<std::vector<double>>& etas) {
  mmr::ExperimentConfig cfg = mmr::load_config(path);
  if (!seeds.empty()) cfg.seed = seeds.front();
  if (etas) cfg.eval.etas = *etas;
  cfg.resolve();
  return cfg;
}

void write_results(const std::string& out_dir, const std::string& dataset,
                   const std::vector<mmr::EvalReport>& reports) {
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / "results.csv";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  mmr::write_results_header(os);
  mmr::write_results_rows(os, dataset, reports);
}

int dispatch(CLI::App& app, int argc, char** argv) {
  std::string config_path, out_dir, checkpoint_path, eta_text;
  std::vector<std::string> seed_text;

  auto* train = app.add_subcommand("train", "train one model and evaluate it on the test split");
  train->add_option("--config", config_path, "experiment config (INI)")->required();
  train->add_option("--seed", seed_text, "override experiment.seed");
  train->add_option("--out-dir", out_dir, "run directory")->required();
  train->add_option("--eta", eta_text, "comma-separated eta grid");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over an eta grid");
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval->add_option("--eta", eta_text, "comma-separated eta grid");
  eval->add_option("--out-dir", out_dir, "directory for results.csv");
  eval->add_option("--config", config_path, "config the checkpoint must agree with");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate over several seeds");
  sweep->add_option("--config", config_path, "experiment config (INI)")->required();
  sweep->add_option("--seed", seed_text, "seeds, comma-separated or repeated")->required();
  sweep->add_option("--eta", eta_text, "comma-separated eta grid");
  sweep->add_option("--out-dir", out_dir, "sweep directory")->required();

  auto* history = app.add_subcommand("search-history", "print the policy trajectory stored in a checkpoint");
  history->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  history->add_option("--out-dir", out_dir, "write search_history.csv here instead of stdout");

  std::size_t layers = 4, fusion = 0, len1 = 3, len2 = 3;
  std::string stream = "fused";
  auto* masks = app.add_subcommand("masks", "print per-layer attention masks as 0/1 grids");
  masks->add_option("--layers", layers, "number of layers");
  masks->add_option("--fusion-index", fusion, "first fused layer (0-based)");
  masks->add_option("--len1", len1, "modality-1 length");
  masks->add_option("--len2", len2, "modality-2 length");
  masks->add_option("--stream", stream, "fused or unimodal")->check(CLI::IsMember({"fused", "unimodal"}));

  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (train->parsed()) {
    mmr::ExperimentConfig cfg = config_with_overrides(config_path, seed_list(seed_text), eta_grid(eta_text));
    mmr::RunOutcome out = mmr::run_train(cfg, out_dir);
    if (!out.log.log.empty()) {
      const auto& last = out.log.log.back().report;
      std::cout << "final loss " << mmr::format_number(last.total) << " after " << out.log.log.size() << " steps\n";
    }
    std::cout << "policy " << mmr::policy_string(out.checkpoint.policy) << " (fusion index "
              << mmr::fusion_index(out.checkpoint.policy) << ")\n";
    mmr::print_summary(std::cout, out.reports, cfg.model.task_type);
    return kOk;
  }
  if (eval->parsed()) {
    const mmr::Checkpoint ckpt = mmr::load_checkpoint(checkpoint_path);
    if (!config_path.empty()) {
      const mmr::ExperimentConfig cfg = mmr::load_config(config_path);
      if (!(cfg.model == ckpt.model) || !(cfg.encoder == ckpt.encoder)) {
        throw mmr::ConfigError("checkpoint " + checkpoint_path + " does not match the model in " + config_path);
      }
    }
    const auto reports = mmr::run_eval(ckpt, eta_grid(eta_text));
    const auto name = ckpt.meta.find("config.experiment.name");
    const std::string dataset = name == ckpt.meta.end() ? "custom" : name->second;
    if (!out_dir.empty()) {
      write_results(out_dir, dataset, reports);
    } else {
      mmr::write_results_header(std::cout);
      mmr::write_results_rows(std::cout, dataset, reports);
    }
    mmr::print_summary(out_dir.empty() ? std::cerr : std::cout, reports, ckpt.model.task_type);
    return kOk;
  }
  if (sweep->parsed()) {
    const auto seeds = seed_list(seed_text);
    mmr::ExperimentConfig cfg = config_with_overrides(config_path, seeds, eta_grid(eta_text));
    const auto rows = mmr::run_sweep(cfg, seeds, out_dir);
    mmr::write_aggregate(std::cout, rows);
    return kOk;
  }
  if (history->parsed()) {
    const mmr::Checkpoint ckpt = mmr::load_checkpoint(checkpoint_path);
    if (ckpt.history.empty()) throw std::runtime_error("checkpoint has no search history");
    if (out_dir.empty()) {
      mmr::write_history(std::cout, ckpt.history, ckpt.model.layers);
    } else {
      std::filesystem::create_directories(out_dir);
      std::ofstream os(std::filesystem::path(out_dir) / "search_history.csv", std::ios::binary);
      mmr::write_history(os, ckpt.history, ckpt.model.layers);
    }
    return kOk;
  }
  if (masks->parsed()) {
    if (layers == 0 || fusion >= layers) throw UsageError("--fusion-index must be below --layers");
    const auto layout = mmr::SequenceLayout::for_lengths(len1, len2);
    const auto policy = mmr::fusion_from_index(fusion, layers);
    for (std::size_t l = 0; l < layers; ++l) {
      const bool fused = stream == "fused" && policy[l] == 1;
      std::cout << "# layer " << l << " fused " << (fused ? 1 : 0) << "\n" << mmr::dump(mmr::compose_flag(fused, layout));
    }
    return kOk;
  }
  return kConfigError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmrobust: multimodal transformer robustness experiments"};
  try {
    return dispatch(app, argc, argv);
  } catch (const mmr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
