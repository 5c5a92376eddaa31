// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace mmr {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::multitask: return "multitask";
    case Mode::multitask_search: return "multitask_search";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "multitask") return Mode::multitask;
  if (s == "multitask_search") return Mode::multitask_search;
  throw std::invalid_argument("unknown mode '" + s + "' (expected baseline, multitask or multitask_search)");
}

std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw std::invalid_argument("empty entry in list '" + s + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw std::invalid_argument("'" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

namespace {

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

double to_real(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("expected a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false");
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_number(xs[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define MMR_UINT(KEY, MEMBER)                                                          \
  Field {                                                                              \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_uint(v); },    \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }             \
  }
#define MMR_REAL(KEY, MEMBER)                                                          \
  Field {                                                                              \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_real(v); },     \
        [](const ExperimentConfig& c) { return num(c.MEMBER); }                        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment.mode", [](ExperimentConfig& c, const std::string& v) { c.mode = parse_mode(v); },
       [](const ExperimentConfig& c) { return to_string(c.mode); }},
      MMR_UINT("experiment.seed", seed),
      {"experiment.name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
       [](const ExperimentConfig& c) { return c.name; }},
      {"data.preset",
       [](ExperimentConfig& c, const std::string& v) {
         c.data = preset_spec(v);
         c.preset = v;
       },
       [](const ExperimentConfig& c) { return c.preset; }},
      MMR_UINT("data.n_classes", data.n_classes),
      {"data.task_type", [](ExperimentConfig& c, const std::string& v) { c.data.task_type = parse_task_type(v); },
       [](const ExperimentConfig& c) { return to_string(c.data.task_type); }},
      MMR_UINT("data.n_samples", data.n_samples),
      MMR_UINT("data.len1", data.len1),
      MMR_UINT("data.len2", data.len2),
      MMR_UINT("data.vocab1", data.vocab1),
      MMR_UINT("data.vocab2", data.vocab2),
      MMR_REAL("data.dominance", data.dominance),
      {"data.xor_mode", [](ExperimentConfig& c, const std::string& v) { c.data.xor_mode = to_bool(v); },
       [](const ExperimentConfig& c) { return std::string(c.data.xor_mode ? "true" : "false"); }},
      MMR_REAL("data.label_noise", data.label_noise),
      MMR_REAL("data.train_fraction", data.train_fraction),
      MMR_REAL("data.val_fraction", data.val_fraction),
      MMR_UINT("model.layers", model.layers),
      MMR_UINT("model.heads", model.heads),
      MMR_UINT("model.d_model", model.d_model),
      MMR_UINT("model.d_ff", model.d_ff),
      MMR_REAL("weights.lambda1", weights.lambda1),
      MMR_REAL("weights.lambda2", weights.lambda2),
      MMR_REAL("weights.lambda3", weights.lambda3),
      MMR_UINT("training.epochs", training.epochs),
      MMR_UINT("training.batch_size", training.batch_size),
      MMR_REAL("training.lr", training.adam.lr),
      MMR_REAL("training.beta1", training.adam.beta1),
      MMR_REAL("training.beta2", training.adam.beta2),
      MMR_REAL("training.eps", training.adam.eps),
      MMR_REAL("training.weight_decay", training.adam.weight_decay),
      MMR_REAL("training.modality_dropout", training.modality_dropout),
      {"training.dropout_modality",
       [](ExperimentConfig& c, const std::string& v) { c.training.dropout_modality = static_cast<int>(to_uint(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.training.dropout_modality); }},
      MMR_UINT("policy.fusion_index", fusion_index),
      MMR_UINT("search.inner_steps", search.inner_steps),
      MMR_REAL("search.inner_lr", search.inner_lr),
      {"search.inner_optimizer",
       [](ExperimentConfig& c, const std::string& v) { c.search.inner_optimizer = parse_inner_optimizer(v); },
       [](const ExperimentConfig& c) { return to_string(c.search.inner_optimizer); }},
      MMR_REAL("search.inner_weight_decay", search.inner_weight_decay),
      MMR_REAL("search.outer_lr", search.outer_lr),
      MMR_REAL("search.outer_weight_decay", search.outer_weight_decay),
      MMR_UINT("search.max_outer_steps", search.max_outer_steps),
      MMR_UINT("search.warmup_steps", search.warmup_steps),
      MMR_UINT("search.patience", search.patience),
      MMR_UINT("search.batch_size", search.batch_size),
      {"search.relaxation", [](ExperimentConfig& c, const std::string& v) { c.search.relaxation = parse_relaxation(v); },
       [](const ExperimentConfig& c) { return to_string(c.search.relaxation); }},
      MMR_REAL("search.alpha_init_std", search.alpha_init_std),
      {"eval.etas", [](ExperimentConfig& c, const std::string& v) { c.eval.etas = parse_number_list(v); },
       [](const ExperimentConfig& c) { return list(c.eval.etas); }},
      {"eval.target_modality",
       [](ExperimentConfig& c, const std::string& v) { c.eval.target_modality = static_cast<int>(to_uint(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.eval.target_modality); }},
      MMR_REAL("eval.threshold", eval.threshold),
      {"eval.all_metrics", [](ExperimentConfig& c, const std::string& v) { c.eval.all_metrics = to_bool(v); },
       [](const ExperimentConfig& c) { return std::string(c.eval.all_metrics ? "true" : "false"); }},
      {"eval.head_rule", [](ExperimentConfig& c, const std::string& v) { c.eval.rule = parse_head_rule(v); },
       [](const ExperimentConfig& c) { return to_string(c.eval.rule); }},
  };
  return table;
}

#undef MMR_UINT
#undef MMR_REAL

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void apply(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  try {
    f->set(cfg, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": invalid value '" + value + "': " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  body(os);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

constexpr const char* kConfigPrefix = "config.";

}  // namespace

void ExperimentConfig::resolve() {
  if (name.empty()) name = preset.empty() ? "custom" : preset;
  data.seed = seed;
  training.seed = seed;
  search.seed = seed;
  eval.seed = seed;
  model.n_classes = data.n_classes;
  model.task_type = data.task_type;
  encoder.d_model = model.d_model;
  encoder.vocab1 = data.vocab1;
  encoder.vocab2 = data.vocab2;
  encoder.max_len1 = data.len1;
  encoder.max_len2 = data.len2;
  auto check = [](const char* what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  check("data", [&] { data.validate(); });
  check("model", [&] {
    model.validate();
    encoder.validate(model.heads);
  });
  check("weights", [&] { weights.validate(); });
  check("search", [&] { search.validate(); });
  if (fusion_index >= model.layers) {
    throw ConfigError("policy.fusion_index: " + std::to_string(fusion_index) + " must be below model.layers (" +
                      std::to_string(model.layers) + ")");
  }
  if (training.epochs == 0) throw ConfigError("training.epochs: must be >= 1");
  if (training.batch_size == 0) throw ConfigError("training.batch_size: must be >= 1");
  if (!(training.adam.lr > 0.0)) throw ConfigError("training.lr: must be positive");
  if (!(training.modality_dropout >= 0.0 && training.modality_dropout <= 1.0)) {
    throw ConfigError("training.modality_dropout: must lie in [0, 1]");
  }
  if (training.dropout_modality < 0 || training.dropout_modality > 2) {
    throw ConfigError("training.dropout_modality: must be 0, 1 or 2");
  }
  if (eval.target_modality != 1 && eval.target_modality != 2) throw ConfigError("eval.target_modality: must be 1 or 2");
  if (eval.etas.empty()) throw ConfigError("eval.etas: empty grid");
  for (double e : eval.etas) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eval.etas: " + format_number(e) + " outside [0, 1]");
  }
  if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) throw ConfigError("eval.threshold: must lie in (0, 1)");
}

std::vector<int> ExperimentConfig::fixed_policy() const { return fusion_from_index(fusion_index, model.layers); }

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  bool head_rule_set = false;
  // The preset resets every data field, so it goes first.
  if (auto it = kv.find("data.preset"); it != kv.end() && !it->second.empty()) apply(cfg, it->first, it->second);
  for (const auto& [k, v] : kv) {
    if (k == "data.preset") continue;
    if (k == "data.seed" || k == "training.seed" || k == "search.seed" || k == "eval.seed") {
      throw ConfigError(k + ": seeds are derived from experiment.seed");
    }
    apply(cfg, k, v);
    head_rule_set |= k == "eval.head_rule";
  }
  if (!head_rule_set) cfg.eval.rule = cfg.mode == Mode::baseline ? HeadRule::joint_only : HeadRule::availability;
  cfg.resolve();
  return cfg;
}

ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  std::map<std::string, std::string> kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!find_field(full)) {
        throw ConfigError("unknown config key '" + full + "'");
      }
      kv[full] = value.data();
    }
  }
  return config_from_map(kv);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  return parse_config(is);
}

void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  std::string current;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const std::size_t dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      os << (current.empty() ? "" : "\n") << '[' << section << "]\n";
      current = section;
    }
    const std::string value = f.get(cfg);
    if (key == "data.preset" && value.empty()) continue;
    os << key.substr(dot + 1) << " = " << value << '\n';
  }
}

namespace {

Checkpoint make_checkpoint(const ExperimentConfig& cfg, const Model& model, const std::vector<int>& policy,
                           const std::vector<double>& alpha, const std::vector<PolicyHistoryRow>& history,
                           const std::string& status) {
  Checkpoint c;
  c.model = model.config();
  c.encoder = model.encoder();
  c.params = model.params();
  c.policy = policy;
  c.alpha = alpha;
  c.history = history;
  for (const auto& [k, v] : cfg.to_map()) c.meta[kConfigPrefix + k] = v.empty() ? "-" : v;
  c.meta["status"] = status;
  return c;
}

ExperimentConfig config_from_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, std::string> kv;
  const std::string prefix = kConfigPrefix;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind(prefix, 0) == 0) kv[k.substr(prefix.size())] = v == "-" ? "" : v;
  }
  if (kv.empty()) throw CheckpointError("checkpoint carries no experiment configuration");
  ExperimentConfig cfg = config_from_map(kv);
  if (!(cfg.model == ckpt.model) || !(cfg.encoder == ckpt.encoder)) {
    throw CheckpointError("checkpoint model header disagrees with its recorded configuration");
  }
  return cfg;
}

void write_run_files(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunOutcome& out) {
  std::filesystem::create_directories(dir);
  write_file(dir / "config.ini", [&](std::ostream& os) { write_config(os, cfg); });
  write_file(dir / "seed.txt", [&](std::ostream& os) { os << cfg.seed << '\n'; });
  save_checkpoint((dir / "model.ckpt").string(), out.checkpoint);
  write_file(dir / "train_log.csv", [&](std::ostream& os) { write_loss_log(os, out.log.log); });
  if (cfg.mode == Mode::multitask_search) {
    write_file(dir / "search_history.csv",
               [&](std::ostream& os) { write_history(os, out.history, cfg.model.layers); });
  }
  if (!out.reports.empty()) {
    write_file(dir / "results.csv", [&](std::ostream& os) {
      write_results_header(os);
      write_results_rows(os, cfg.name, out.reports);
    });
  }
}

}  // namespace

RunOutcome run_train(const ExperimentConfig& config, const std::string& out_dir) {
  ExperimentConfig cfg = config;
  cfg.resolve();
  const Dataset ds = generate(cfg.data);
  TaskWeights weights = cfg.weights;
  if (cfg.mode == Mode::baseline) weights = {0.0, 0.0, cfg.weights.lambda3 > 0 ? cfg.weights.lambda3 : 1.0};

  RunOutcome out;
  Model model(cfg.model, cfg.encoder, cfg.seed);
  std::vector<int> policy = cfg.fixed_policy();
  std::vector<double> alpha;

  auto save_partial = [&](const Model& m, const char* status) {
    out.checkpoint = make_checkpoint(cfg, m, policy, alpha, out.history, status);
    if (!out_dir.empty()) write_run_files(out_dir, cfg, out);
  };

  std::vector<Sample> train_set = ds.train;
  if (cfg.mode == Mode::multitask_search) {
    try {
      SearchResult sr = bilevel_search(model, ds.train, ds.val, cfg.search, weights);
      out.history = sr.history;
      alpha = sr.alpha;
      policy = sr.policy.s;
    } catch (const SearchDiverged& e) {
      out.history = e.history();
      save_partial(model, "search_diverged");
      throw;
    }
    // Retraining uses the whole training pool, validation split included.
    train_set.insert(train_set.end(), ds.val.begin(), ds.val.end());
    model = Model(cfg.model, cfg.encoder, cfg.seed);
  }

  try {
    out.log = train_fixed(model, train_set, policy, weights, cfg.training);
  } catch (const TrainingDiverged&) {
    save_partial(model, "diverged");
    throw;
  }
  out.checkpoint = make_checkpoint(cfg, model, policy, alpha, out.history, "ok");
  out.reports = evaluate(model, policy, ds.test, cfg.eval);
  if (!out_dir.empty()) write_run_files(out_dir, cfg, out);
  return out;
}

std::vector<EvalReport> run_eval(const Checkpoint& ckpt, const std::optional<std::vector<double>>& etas) {
  ExperimentConfig cfg = config_from_checkpoint(ckpt);
  if (etas) {
    cfg.eval.etas = *etas;
    cfg.resolve();
  }
  Model model = model_from_checkpoint(ckpt);
  const Dataset ds = generate(cfg.data);
  return evaluate(model, ckpt.policy, ds.test, cfg.eval);
}

std::vector<SweepRow> aggregate(const std::string& dataset, Mode mode, const std::vector<EvalReport>& reports) {
  std::vector<SweepRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& r : reports) {
    for (const auto& [metric, v] : r.metrics) {
      auto it = std::find_if(rows.begin(), rows.end(),
                             [&](const SweepRow& s) { return s.eta == r.eta && s.metric == metric; });
      if (it == rows.end()) {
        rows.push_back({dataset, to_string(mode), r.eta, metric, 0, 0.0, 0.0, 0.0});
        values.emplace_back();
        it = rows.end() - 1;
      }
      values[static_cast<std::size_t>(it - rows.begin())].push_back(v);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double sum = 0.0;
    for (double x : v) sum += x;
    rows[i].n = v.size();
    rows[i].mean = sum / static_cast<double>(v.size());
    rows[i].min = *std::min_element(v.begin(), v.end());
    rows[i].max = *std::max_element(v.begin(), v.end());
  }
  return rows;
}

void write_aggregate(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "# results-schema: " << kResultsSchemaVersion << "\n";
  os << "dataset,mode,eta,metric,n_seeds,mean,min,max\n";
  for (const auto& r : rows) {
    os << r.dataset << ',' << r.mode << ',' << format_number(r.eta) << ',' << r.metric << ',' << r.n << ','
       << format_number(r.mean) << ',' << format_number(r.min) << ',' << format_number(r.max) << '\n';
  }
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                                const std::string& out_dir) {
  if (seeds.empty()) throw ConfigError("sweep: no seeds given");
  std::vector<EvalReport> all;
  ExperimentConfig cfg = config;
  cfg.resolve();
  for (std::uint64_t s : seeds) {
    ExperimentConfig run = cfg;
    run.seed = s;
    run.resolve();
    const std::string dir = out_dir.empty() ? "" : (std::filesystem::path(out_dir) / ("seed_" + std::to_string(s))).string();
    RunOutcome o = run_train(run, dir);
    all.insert(all.end(), o.reports.begin(), o.reports.end());
  }
  std::vector<SweepRow> rows = aggregate(cfg.name, cfg.mode, all);
  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "aggregate.csv", [&](std::ostream& os) { write_aggregate(os, rows); });
    write_file(dir / "plot_data.csv", [&](std::ostream& os) {
      os << "# results-schema: " << kResultsSchemaVersion << "\n";
      os << "dataset,mode,seed,eta,metric,value\n";
      for (const auto& r : all) {
        for (const auto& [metric, v] : r.metrics) {
          os << cfg.name << ',' << to_string(cfg.mode) << ',' << r.seed << ',' << format_number(r.eta) << ',' << metric
             << ',' << format_number(v) << '\n';
        }
      }
    });
  }
  return rows;
}

void write_history(std::ostream& os, const std::vector<PolicyHistoryRow>& rows, std::size_t depth) {
  os << "outer_step,argmax";
  for (std::size_t i = 0; i < depth; ++i) os << ",s_s_" << i;
  os << ",val_loss\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.outer_step << ',' << r.argmax;
    for (double v : r.soft) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.val_loss);
    os << ',' << buf << '\n';
  }
}

void print_summary(std::ostream& os, const std::vector<EvalReport>& reports, TaskType task) {
  const std::string metric = primary_metric(task);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s%-12s%s\n", "eta", metric.c_str(), "delta");
  os << buf;
  for (const auto& r : reports) {
    const auto m = r.metrics.find(metric);
    const auto d = r.delta.find(metric);
    char value[32] = "n/a";
    if (m != r.metrics.end()) std::snprintf(value, sizeof value, "%.1f", m->second * 100.0);
    const std::string delta = d == r.delta.end() ? "" : format_number(d->second) + "%";
    std::snprintf(buf, sizeof buf, "%-8s%-12s%s\n", format_number(r.eta).c_str(), value, delta.c_str());
    os << buf;
  }
}

}  // namespace mmr
