#pragma once

#include <string>
#include <vector>

#include "pathcast/data.hpp"
#include "pathcast/io.hpp"
#include "pathcast/metrics.hpp"
#include "pathcast/model.hpp"
#include "pathcast/train.hpp"

namespace pathcast {

struct VariantResult {
  std::string name;
  GraphMode mode = GraphMode::kEvolving;
  NormMode norm = NormMode::kAsymmetric;
  std::vector<MetricsReport> per_seed;  // test metrics, one per seed
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_macro_f1 = 0.0;
};

// Trains and evaluates the four standard variants under identical seeds and
// budgets: (a) evolving+asymmetric, (b) static+asymmetric, (c) identity
// adjacency, (d) evolving+symmetric. `graph` must already be normalized.
inline std::vector<VariantResult> benchmark_variants(
    const TimeEvolvingGraph& graph, const std::vector<std::vector<std::size_t>>& paths,
    const DatasetSplit& split, const ModelConfig& base_model, const TrainConfig& base_train,
    const std::vector<unsigned long long>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("benchmark_variants: no seeds");
  std::vector<VariantResult> table;
  const struct {
    const char* name;
    GraphMode mode;
    NormMode norm;
  } variants[] = {
      {"evolving_asymmetric", GraphMode::kEvolving, NormMode::kAsymmetric},
      {"static_asymmetric", GraphMode::kStatic, NormMode::kAsymmetric},
      {"identity", GraphMode::kIdentity, NormMode::kAsymmetric},
      {"evolving_symmetric", GraphMode::kEvolving, NormMode::kSymmetric},
  };
  for (const auto& variant : variants) {
    VariantResult row;
    row.name = variant.name;
    row.mode = variant.mode;
    row.norm = variant.norm;
    for (unsigned long long seed : seeds) {
      ModelConfig mcfg = base_model;
      mcfg.mode = variant.mode;
      mcfg.norm = variant.norm;
      mcfg.seed = seed;
      TrainConfig tcfg = base_train;
      tcfg.seed = seed;
      FitResult fitres = fit(graph, paths, split, mcfg, tcfg);
      SplitEvaluation test = evaluate_split(fitres.params, mcfg, graph, paths, split.test,
                                            tcfg.batch_size, tcfg.decision_threshold);
      row.per_seed.push_back(test.metrics);
    }
    for (const MetricsReport& m : row.per_seed) {
      row.mean_precision += m.precision;
      row.mean_recall += m.recall;
      row.mean_macro_f1 += m.macro_f1;
    }
    const auto k = static_cast<double>(row.per_seed.size());
    row.mean_precision /= k;
    row.mean_recall /= k;
    row.mean_macro_f1 /= k;
    table.push_back(std::move(row));
  }
  return table;
}

inline std::string benchmark_csv(const std::vector<VariantResult>& table) {
  std::string out = "variant,precision,recall,macro_f1\n";
  for (const VariantResult& row : table) {
    out += row.name + "," + format_double(row.mean_precision) + "," +
           format_double(row.mean_recall) + "," + format_double(row.mean_macro_f1) + "\n";
  }
  return out;
}

}  // namespace pathcast
