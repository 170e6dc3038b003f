// pathcast command-line interface.
//
// Single binary exposing the pipeline: generate a synthetic dataset, build
// labeled instances, train, evaluate, predict, export attention weights, run
// a gradient check, and benchmark the standard variants. Every subcommand
// prints a single JSON status line to stdout on success. Exit codes: 0 on
// success, 1 on invalid input or flags, 2 on runtime failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathcast/benchmark.hpp"
#include "pathcast/data.hpp"
#include "pathcast/metrics.hpp"
#include "pathcast/model.hpp"
#include "pathcast/train.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return doc;
}

// Run config file: {"model": {...}, "train": {...}}, both sections optional.
// Missing sections fall back to defaults; an empty path means all defaults.
std::pair<pathcast::ModelConfig, pathcast::TrainConfig> load_run_config(
    const std::string& path) {
  pathcast::ModelConfig model;
  pathcast::TrainConfig train;
  if (path.empty()) return {model, train};
  const json doc = read_json_file(path);
  if (!doc.is_object()) throw std::invalid_argument(path + ": expected a JSON object");
  try {
    if (doc.contains("model")) model = pathcast::config_from_json(doc.at("model"));
    if (doc.contains("train")) train = pathcast::train_config_from_json(doc.at("train"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return {model, train};
}

// Dataset directory + labels, with signals min-max scaled on the training
// prefix only. Shared by every subcommand that consumes a built dataset.
struct LoadedDataset {
  pathcast::SyntheticData data;
  pathcast::DatasetSplit split;
  pathcast::TimeEvolvingGraph normalized;
};

LoadedDataset load_dataset(const std::string& dir, std::size_t window, std::size_t horizon) {
  LoadedDataset out;
  out.data = pathcast::read_dataset(dir);
  out.split = pathcast::read_labels(dir, out.data, window, horizon);
  const std::size_t fit_end =
      pathcast::train_range_end(out.data.graph.n_steps(), window, horizon);
  out.normalized = pathcast::normalize_features(out.data.graph, fit_end);
  return out;
}

std::vector<std::size_t> parse_id_list(const std::string& csv, std::size_t limit,
                                       const std::string& flag) {
  std::vector<std::size_t> ids;
  for (const std::string& field : pathcast::split(csv, ',')) {
    const long long v = pathcast::parse_int(field, flag);
    if (v < 0 || static_cast<std::size_t>(v) >= limit) {
      throw std::invalid_argument(flag + ": id " + field + " out of range (have " +
                                  std::to_string(limit) + ")");
    }
    ids.push_back(static_cast<std::size_t>(v));
  }
  if (ids.empty()) throw std::invalid_argument(flag + ": empty id list");
  return ids;
}

void print_status(const json& status) { std::printf("%s\n", status.dump().c_str()); }

// --- generate ---------------------------------------------------------------

int run_generate(const std::string& config_path, const std::string& out_dir,
                 long long seed_override) {
  pathcast::GeneratorConfig cfg =
      pathcast::generator_config_from_json(read_json_file(config_path));
  if (seed_override >= 0) cfg.seed = static_cast<unsigned long long>(seed_override);
  cfg.validate();
  pathcast::SyntheticData data = pathcast::generate_synthetic(cfg);
  std::filesystem::create_directories(out_dir);
  pathcast::write_dataset(out_dir, data);
  print_status(json{{"status", "ok"},
                    {"subcommand", "generate"},
                    {"out", out_dir},
                    {"n_nodes", data.graph.n_nodes()},
                    {"n_steps", data.graph.n_steps()},
                    {"n_paths", data.paths.size()},
                    {"n_events", data.events.size()},
                    {"seed", cfg.seed}});
  return 0;
}

// --- build ------------------------------------------------------------------

int run_build(const std::string& dir, std::size_t window, std::size_t horizon,
              const std::string& rule_name, std::size_t alarm_threshold) {
  const pathcast::LabelRule rule = pathcast::label_rule_from_string(rule_name);
  pathcast::SyntheticData data = pathcast::read_dataset(dir);
  pathcast::DatasetSplit split = pathcast::build_instances(
      data.graph, data.paths, data.events, window, horizon, rule, alarm_threshold);
  pathcast::write_labels(dir, split);
  std::size_t positives = 0;
  auto count = [&positives](const std::vector<pathcast::PathInstance>& set) {
    for (const pathcast::PathInstance& inst : set) {
      positives += static_cast<std::size_t>(inst.label);
    }
  };
  count(split.train);
  count(split.val);
  count(split.test);
  print_status(json{{"status", "ok"},
                    {"subcommand", "build"},
                    {"labels", dir + "/labels.csv"},
                    {"rule", rule_name},
                    {"train", split.train.size()},
                    {"val", split.val.size()},
                    {"test", split.test.size()},
                    {"positive_fraction",
                     static_cast<double>(positives) / static_cast<double>(split.size())}});
  return 0;
}

// --- train ------------------------------------------------------------------

// History lands next to the model: m.json -> m_history.csv.
std::string history_path_for(const std::string& model_path) {
  const std::string suffix = ".json";
  if (model_path.size() > suffix.size() &&
      model_path.compare(model_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return model_path.substr(0, model_path.size() - suffix.size()) + "_history.csv";
  }
  return model_path + "_history.csv";
}

int run_train(const std::string& dir, const std::string& model_path,
              const std::string& config_path, long long seed_override) {
  auto [model_cfg, train_cfg] = load_run_config(config_path);
  if (seed_override >= 0) {
    model_cfg.seed = static_cast<unsigned long long>(seed_override);
    train_cfg.seed = static_cast<unsigned long long>(seed_override);
  }
  LoadedDataset loaded = load_dataset(dir, model_cfg.window, model_cfg.horizon);
  pathcast::FitResult result =
      pathcast::fit(loaded.normalized, loaded.data.paths, loaded.split, model_cfg, train_cfg);
  pathcast::save_checkpoint(model_path, model_cfg, result.params);
  const std::string history_path = history_path_for(model_path);
  pathcast::write_text(history_path, pathcast::history_csv(result.history));
  print_status(json{{"status", "ok"},
                    {"subcommand", "train"},
                    {"model", model_path},
                    {"history", history_path},
                    {"epochs", result.history.size()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_loss", result.best_val_loss},
                    {"skipped_steps", result.skipped_steps}});
  return 0;
}

// --- evaluate ---------------------------------------------------------------

int run_evaluate(const std::string& dir, const std::string& model_path,
                 const std::string& report_path, double threshold) {
  auto [cfg, params] = pathcast::load_checkpoint(model_path);
  LoadedDataset loaded = load_dataset(dir, cfg.window, cfg.horizon);

  std::string csv =
      "split,instances,positives,tp,fp,fn,tn,precision,recall,f1_pos,f1_neg,macro_f1,"
      "mean_loss\n";
  pathcast::SplitEvaluation test_eval;
  const struct {
    const char* name;
    const std::vector<pathcast::PathInstance>* set;
  } rows[] = {{"train", &loaded.split.train},
              {"val", &loaded.split.val},
              {"test", &loaded.split.test}};
  for (const auto& row : rows) {
    const pathcast::SplitEvaluation eval =
        pathcast::evaluate_split(params, cfg, loaded.normalized, loaded.data.paths, *row.set,
                                 /*batch_size=*/32, threshold);
    std::size_t positives = 0;
    for (const pathcast::PathInstance& inst : *row.set) {
      positives += static_cast<std::size_t>(inst.label);
    }
    const pathcast::MetricsReport& m = eval.metrics;
    csv += std::string(row.name) + "," + std::to_string(row.set->size()) + "," +
           std::to_string(positives) + "," + std::to_string(m.tp) + "," +
           std::to_string(m.fp) + "," + std::to_string(m.fn) + "," + std::to_string(m.tn) +
           "," + pathcast::format_double(m.precision) + "," +
           pathcast::format_double(m.recall) + "," + pathcast::format_double(m.f1_pos) + "," +
           pathcast::format_double(m.f1_neg) + "," + pathcast::format_double(m.macro_f1) +
           "," + pathcast::format_double(eval.mean_loss) + "\n";
    if (std::string(row.name) == "test") test_eval = eval;
  }
  pathcast::write_text(report_path, csv);
  print_status(json{{"status", "ok"},
                    {"subcommand", "evaluate"},
                    {"report", report_path},
                    {"test_precision", test_eval.metrics.precision},
                    {"test_recall", test_eval.metrics.recall},
                    {"test_macro_f1", test_eval.metrics.macro_f1},
                    {"test_mean_loss", test_eval.mean_loss}});
  return 0;
}

// --- predict ----------------------------------------------------------------

int run_predict(const std::string& dir, const std::string& model_path,
                const std::string& path_ids_csv, const std::string& out_path,
                long long t_from, long long t_to, double threshold) {
  auto [cfg, params] = pathcast::load_checkpoint(model_path);
  LoadedDataset loaded = load_dataset(dir, cfg.window, cfg.horizon);
  const std::vector<std::size_t> ids =
      parse_id_list(path_ids_csv, loaded.data.paths.size(), "--paths");

  // Prediction-time grid: [window-1, T-horizon), optionally narrowed.
  const std::size_t grid_first = cfg.window - 1;
  const std::size_t grid_last = loaded.data.graph.n_steps() - cfg.horizon;  // exclusive
  std::size_t lo = grid_first, hi = grid_last;
  if (t_from >= 0) lo = std::max(lo, static_cast<std::size_t>(t_from));
  if (t_to >= 0) hi = std::min(hi, static_cast<std::size_t>(t_to) + 1);
  if (lo >= hi) {
    throw std::invalid_argument("--from/--to leave no valid prediction times (grid is [" +
                                std::to_string(grid_first) + ", " +
                                std::to_string(grid_last) + "))");
  }

  std::string csv = "t,path_id,p_fail,predicted\n";
  for (std::size_t t = lo; t < hi; ++t) {
    std::vector<pathcast::PathRequest> requests;
    requests.reserve(ids.size());
    for (std::size_t id : ids) {
      requests.push_back({t, loaded.data.paths[id], -1, id});
    }
    const std::vector<pathcast::Prediction> preds =
        pathcast::forward(params, cfg, loaded.normalized, requests);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double p_fail = preds[i].probabilities[1];
      csv += std::to_string(t) + "," + std::to_string(requests[i].tag) + "," +
             pathcast::format_double(p_fail) + "," + (p_fail >= threshold ? "1" : "0") + "\n";
    }
  }
  pathcast::write_text(out_path, csv);
  print_status(json{{"status", "ok"},
                    {"subcommand", "predict"},
                    {"out", out_path},
                    {"paths", ids.size()},
                    {"t_first", lo},
                    {"t_last", hi - 1}});
  return 0;
}

// --- export-attention -------------------------------------------------------

int run_export_attention(const std::string& dir, const std::string& model_path,
                         const std::string& out_path, long long t_flag,
                         const std::string& path_ids_csv) {
  auto [cfg, params] = pathcast::load_checkpoint(model_path);
  LoadedDataset loaded = load_dataset(dir, cfg.window, cfg.horizon);

  const std::size_t grid_first = cfg.window - 1;
  const std::size_t grid_last = loaded.data.graph.n_steps() - cfg.horizon;  // exclusive
  std::size_t t = grid_last - 1;  // default: latest prediction time
  if (t_flag >= 0) {
    t = static_cast<std::size_t>(t_flag);
    if (t < grid_first || t >= grid_last) {
      throw std::invalid_argument("--t " + std::to_string(t) + " outside the grid [" +
                                  std::to_string(grid_first) + ", " +
                                  std::to_string(grid_last) + ")");
    }
  }
  std::vector<std::size_t> ids;
  if (path_ids_csv.empty()) {
    for (std::size_t i = 0; i < loaded.data.paths.size(); ++i) ids.push_back(i);
  } else {
    ids = parse_id_list(path_ids_csv, loaded.data.paths.size(), "--paths");
  }

  std::vector<pathcast::PathRequest> requests;
  requests.reserve(ids.size());
  for (std::size_t id : ids) {
    requests.push_back({t, loaded.data.paths[id], -1, id});
  }
  const std::vector<pathcast::Prediction> preds =
      pathcast::forward(params, cfg, loaded.normalized, requests);
  pathcast::write_text(out_path, pathcast::attention_csv(requests, preds));
  print_status(json{{"status", "ok"},
                    {"subcommand", "export-attention"},
                    {"out", out_path},
                    {"t", t},
                    {"paths", ids.size()}});
  return 0;
}

// --- gradcheck --------------------------------------------------------------

// Analytic gradients vs central finite differences on a small random
// instance: 6 nodes, a 4-snapshot window, and a 3-node path.
int run_gradcheck(unsigned long long seed) {
  pathcast::ModelConfig cfg;
  cfg.window = 4;
  cfg.d = 2;
  cfg.h = 5;
  cfg.u = 4;
  cfg.v = 4;
  cfg.d_s = 3;
  cfg.r = 2;

  const std::size_t n = 6;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  pathcast::TimeEvolvingGraph graph;
  graph.features = pathcast::Tensor({cfg.window, n, cfg.d});
  for (std::size_t t = 0; t < cfg.window; ++t) {
    pathcast::GraphSnapshot snap;
    snap.n_nodes = n;
    snap.time_index = t;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && unit(rng) < 0.4) snap.edges.push_back({i, j, weight(rng)});
      }
    }
    graph.snapshots.push_back(std::move(snap));
  }
  for (std::size_t i = 0; i < graph.features.numel(); ++i) {
    graph.features.data()[i] = unit(rng);
  }

  std::vector<pathcast::PathRequest> requests{{cfg.window - 1, {0, 2, 5}, 1, 0}};
  pathcast::ParamMap params = pathcast::init_params(cfg, seed);

  auto loss_at = [&](const pathcast::ParamMap& p) {
    pathcast::ComputeGraph g;
    pathcast::ModelIds ids = pathcast::register_model(g, cfg, p);
    pathcast::OperatorCache ops(graph, cfg.mode, cfg.norm);
    pathcast::BatchIds out =
        pathcast::build_forward(g, ids, cfg, graph, ops, requests, /*with_loss=*/true);
    return g.value(out.loss).at(0, 0);
  };

  pathcast::ComputeGraph g;
  pathcast::ModelIds ids = pathcast::register_model(g, cfg, params);
  pathcast::OperatorCache ops(graph, cfg.mode, cfg.norm);
  pathcast::BatchIds out =
      pathcast::build_forward(g, ids, cfg, graph, ops, requests, /*with_loss=*/true);
  g.set_root(out.loss);
  const pathcast::GradientMap analytic = g.gradient(out.loss);
  const pathcast::GradientMap reference = pathcast::finite_difference_gradient(loss_at, params);

  constexpr double kRelTol = 1e-4;
  std::string worst;
  const double ratio =
      pathcast::gradient_check_ratio(analytic, reference, kRelTol, 1e-6, &worst);
  std::size_t n_params = 0;
  for (const auto& [name, tensor] : params) n_params += tensor.numel();

  print_status(json{{"status", ratio <= 1.0 ? "ok" : "failed"},
                    {"subcommand", "gradcheck"},
                    {"seed", seed},
                    {"parameters", n_params},
                    {"max_relative_error", ratio * kRelTol},
                    {"tolerance", kRelTol},
                    {"worst_coordinate", worst}});
  if (ratio > 1.0) {
    std::fprintf(stderr, "error: gradient mismatch at %s (envelope ratio %.6g)\n",
                 worst.c_str(), ratio);
    return 2;
  }
  return 0;
}

// --- benchmark --------------------------------------------------------------

int run_benchmark(const std::string& dir, const std::string& out_path,
                  const std::string& config_path, const std::string& seeds_csv) {
  auto [model_cfg, train_cfg] = load_run_config(config_path);
  std::vector<unsigned long long> seeds;
  for (const std::string& field : pathcast::split(seeds_csv, ',')) {
    const long long v = pathcast::parse_int(field, "--seeds");
    if (v < 0) throw std::invalid_argument("--seeds: seed must be non-negative");
    seeds.push_back(static_cast<unsigned long long>(v));
  }
  LoadedDataset loaded = load_dataset(dir, model_cfg.window, model_cfg.horizon);
  const std::vector<pathcast::VariantResult> table = pathcast::benchmark_variants(
      loaded.normalized, loaded.data.paths, loaded.split, model_cfg, train_cfg, seeds);
  pathcast::write_text(out_path, pathcast::benchmark_csv(table));
  json summary = json::object();
  for (const pathcast::VariantResult& row : table) {
    summary[row.name] = row.mean_macro_f1;
  }
  print_status(json{{"status", "ok"},
                    {"subcommand", "benchmark"},
                    {"out", out_path},
                    {"seeds", seeds.size()},
                    {"mean_macro_f1", summary}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathcast: path failure prediction on time-evolving graphs"};
  app.require_subcommand(1);

  // generate
  std::string gen_config, gen_out;
  long long gen_seed = -1;
  CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
  generate->add_option("--config", gen_config, "Generator config JSON")->required();
  generate->add_option("--out", gen_out, "Output dataset directory")->required();
  generate->add_option("--seed", gen_seed, "Override the config seed");

  // build
  std::string build_dir, build_rule;
  std::size_t build_window = 0, build_horizon = 0, build_alarm = 1;
  CLI::App* build = app.add_subcommand("build", "Label path instances from a dataset");
  build->add_option("--data", build_dir, "Dataset directory")->required();
  build->add_option("--window", build_window, "Snapshots per input window")->required();
  build->add_option("--horizon", build_horizon, "Label lookahead in steps")->required();
  build->add_option("--rule", build_rule, "Label rule: telecom or traffic")->required();
  build->add_option("--alarm-threshold", build_alarm, "Alarm count that marks a failure");

  // train
  std::string train_dir, train_model, train_config;
  long long train_seed = -1;
  CLI::App* train = app.add_subcommand("train", "Train a model on a built dataset");
  train->add_option("--data", train_dir, "Dataset directory")->required();
  train->add_option("--model", train_model, "Checkpoint output path")->required();
  train->add_option("--config", train_config, "Run config JSON: {\"model\":{},\"train\":{}}");
  train->add_option("--seed", train_seed, "Override init and shuffle seeds");

  // evaluate
  std::string eval_dir, eval_model, eval_report;
  double eval_threshold = 0.5;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on all splits");
  evaluate->add_option("--data", eval_dir, "Dataset directory")->required();
  evaluate->add_option("--model", eval_model, "Checkpoint path")->required();
  evaluate->add_option("--report", eval_report, "Metrics report CSV path")->required();
  evaluate->add_option("--threshold", eval_threshold, "Positive-class decision threshold");

  // predict
  std::string pred_dir, pred_model, pred_paths, pred_out;
  long long pred_from = -1, pred_to = -1;
  double pred_threshold = 0.5;
  CLI::App* predict = app.add_subcommand("predict", "Per-time failure probabilities");
  predict->add_option("--data", pred_dir, "Dataset directory")->required();
  predict->add_option("--model", pred_model, "Checkpoint path")->required();
  predict->add_option("--paths", pred_paths, "Comma-separated path ids")->required();
  predict->add_option("--out", pred_out, "Prediction CSV path")->required();
  predict->add_option("--from", pred_from, "First prediction time (default: grid start)");
  predict->add_option("--to", pred_to, "Last prediction time (default: grid end)");
  predict->add_option("--threshold", pred_threshold, "Positive-class decision threshold");

  // export-attention
  std::string attn_dir, attn_model, attn_out, attn_paths;
  long long attn_t = -1;
  CLI::App* attn = app.add_subcommand("export-attention", "Per-node attention importance");
  attn->add_option("--data", attn_dir, "Dataset directory")->required();
  attn->add_option("--model", attn_model, "Checkpoint path")->required();
  attn->add_option("--out", attn_out, "Attention CSV path")->required();
  attn->add_option("--t", attn_t, "Prediction time (default: latest)");
  attn->add_option("--paths", attn_paths, "Comma-separated path ids (default: all)");

  // gradcheck
  unsigned long long grad_seed = 1;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Gradients vs finite differences");
  gradcheck->add_option("--seed", grad_seed, "Instance and parameter seed");

  // benchmark
  std::string bench_dir, bench_out, bench_config;
  std::string bench_seeds = "1,2,3";
  CLI::App* benchmark = app.add_subcommand("benchmark", "Compare the four variants");
  benchmark->add_option("--data", bench_dir, "Dataset directory")->required();
  benchmark->add_option("--out", bench_out, "Benchmark table CSV path")->required();
  benchmark->add_option("--config", bench_config,
                        "Run config JSON: {\"model\":{},\"train\":{}}");
  benchmark->add_option("--seeds", bench_seeds, "Comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(generate)) return run_generate(gen_config, gen_out, gen_seed);
    if (app.got_subcommand(build)) {
      return run_build(build_dir, build_window, build_horizon, build_rule, build_alarm);
    }
    if (app.got_subcommand(train)) {
      return run_train(train_dir, train_model, train_config, train_seed);
    }
    if (app.got_subcommand(evaluate)) {
      return run_evaluate(eval_dir, eval_model, eval_report, eval_threshold);
    }
    if (app.got_subcommand(predict)) {
      return run_predict(pred_dir, pred_model, pred_paths, pred_out, pred_from, pred_to,
                         pred_threshold);
    }
    if (app.got_subcommand(attn)) {
      return run_export_attention(attn_dir, attn_model, attn_out, attn_t, attn_paths);
    }
    if (app.got_subcommand(gradcheck)) return run_gradcheck(grad_seed);
    if (app.got_subcommand(benchmark)) {
      return run_benchmark(bench_dir, bench_out, bench_config, bench_seeds);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "error: no subcommand selected\n");
  return 1;
}
