#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pathcast/graph.hpp"
#include "pathcast/io.hpp"
#include "pathcast/tensor.hpp"

namespace pathcast {

enum class LabelRule { kTelecom, kTraffic };

inline const char* to_string(LabelRule r) {
  return r == LabelRule::kTelecom ? "telecom" : "traffic";
}

inline LabelRule label_rule_from_string(const std::string& s) {
  if (s == "telecom") return LabelRule::kTelecom;
  if (s == "traffic") return LabelRule::kTraffic;
  throw std::invalid_argument("unknown label rule '" + s + "'");
}

struct GeneratorConfig {
  std::size_t n_nodes = 40;
  std::size_t n_steps = 500;
  std::size_t d = 2;
  double edge_probability = 0.08;
  // Background per-step event rates (drawn on elements away from the
  // monitored paths so they act as distractors, not label noise).
  double rate_link_failure = 0.03;
  double rate_closure = 0.01;
  double rate_congestion = 0.02;
  std::size_t propagation_depth = 2;
  // Failure episodes planted on the monitored paths. A negative rate asks
  // the generator to tune it until the positive-label fraction lands in
  // the accepted band.
  double episode_rate = -1.0;
  double target_positive_fraction = 0.15;
  // Monitored paths.
  std::size_t n_paths = 30;
  std::size_t min_path_len = 2;
  std::size_t max_path_len = 8;
  bool allow_reciprocal = false;
  // Label rule parameters used when tuning the positive fraction.
  std::size_t alarm_threshold = 1;
  std::size_t window = 12;
  std::size_t horizon = 3;
  unsigned long long seed = 1;

  void validate() const {
    if (n_nodes < 4) throw std::invalid_argument("generator: need at least 4 nodes");
    if (d == 0) throw std::invalid_argument("generator: d must be positive");
    if (n_steps <= window + horizon) {
      throw std::invalid_argument("generator: n_steps must exceed window + horizon");
    }
    for (double rate : {rate_link_failure, rate_closure, rate_congestion}) {
      if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("generator: rate outside [0,1]");
    }
    if (edge_probability <= 0.0 || edge_probability > 1.0) {
      throw std::invalid_argument("generator: edge probability outside (0,1]");
    }
    if (n_paths == 0) throw std::invalid_argument("generator: n_paths must be positive");
    if (min_path_len < 2 || max_path_len < min_path_len) {
      throw std::invalid_argument("generator: bad path length range");
    }
    if (target_positive_fraction <= 0.0 || target_positive_fraction >= 1.0) {
      throw std::invalid_argument("generator: target fraction outside (0,1)");
    }
  }
};

inline nlohmann::json generator_config_to_json(const GeneratorConfig& c) {
  return nlohmann::json{{"n_nodes", c.n_nodes},
                        {"n_steps", c.n_steps},
                        {"d", c.d},
                        {"edge_probability", c.edge_probability},
                        {"rate_link_failure", c.rate_link_failure},
                        {"rate_closure", c.rate_closure},
                        {"rate_congestion", c.rate_congestion},
                        {"propagation_depth", c.propagation_depth},
                        {"episode_rate", c.episode_rate},
                        {"target_positive_fraction", c.target_positive_fraction},
                        {"n_paths", c.n_paths},
                        {"min_path_len", c.min_path_len},
                        {"max_path_len", c.max_path_len},
                        {"allow_reciprocal", c.allow_reciprocal},
                        {"alarm_threshold", c.alarm_threshold},
                        {"window", c.window},
                        {"horizon", c.horizon},
                        {"seed", c.seed}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    c.n_nodes = j.value("n_nodes", c.n_nodes);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.d = j.value("d", c.d);
    c.edge_probability = j.value("edge_probability", c.edge_probability);
    c.rate_link_failure = j.value("rate_link_failure", c.rate_link_failure);
    c.rate_closure = j.value("rate_closure", c.rate_closure);
    c.rate_congestion = j.value("rate_congestion", c.rate_congestion);
    c.propagation_depth = j.value("propagation_depth", c.propagation_depth);
    c.episode_rate = j.value("episode_rate", c.episode_rate);
    c.target_positive_fraction =
        j.value("target_positive_fraction", c.target_positive_fraction);
    c.n_paths = j.value("n_paths", c.n_paths);
    c.min_path_len = j.value("min_path_len", c.min_path_len);
    c.max_path_len = j.value("max_path_len", c.max_path_len);
    c.allow_reciprocal = j.value("allow_reciprocal", c.allow_reciprocal);
    c.alarm_threshold = j.value("alarm_threshold", c.alarm_threshold);
    c.window = j.value("window", c.window);
    c.horizon = j.value("horizon", c.horizon);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("generator config: ") + ex.what());
  }
  c.validate();
  return c;
}

struct PathInstance {
  std::size_t path_id = 0;
  std::size_t t = 0;
  int label = 0;
};

struct DatasetSplit {
  std::vector<PathInstance> train, val, test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

struct SplitFractions {
  double train = 0.65;
  double val = 0.12;  // remainder is test

  void validate() const {
    if (train <= 0.0 || val < 0.0 || train + val >= 1.0) {
      throw std::invalid_argument("split fractions: need 0 < train, train + val < 1");
    }
  }
};

struct SyntheticData {
  TimeEvolvingGraph graph;  // raw signals; normalize_features scales them
  std::vector<NodeEvent> events;
  std::vector<std::vector<std::size_t>> paths;
};

// ---------------------------------------------------------------------------
// Path sampling
// ---------------------------------------------------------------------------

namespace detail {

// Unit-cost shortest path via Dijkstra with deterministic tie-breaking
// (lowest node id expanded first). Returns the node sequence or empty.
inline std::vector<std::size_t> shortest_path(const std::vector<std::vector<std::size_t>>& adj,
                                              std::size_t src, std::size_t dst) {
  const std::size_t n = adj.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(n, kUnset), parent(n, kUnset);
  using Item = std::pair<std::size_t, std::size_t>;  // (distance, node)
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist[src] = 0;
  pq.push({0, src});
  while (!pq.empty()) {
    auto [dcur, node] = pq.top();
    pq.pop();
    if (dcur != dist[node]) continue;
    if (node == dst) break;
    for (std::size_t next : adj[node]) {
      if (dist[next] == kUnset || dist[node] + 1 < dist[next] ||
          (dist[node] + 1 == dist[next] && node < parent[next])) {
        dist[next] = dist[node] + 1;
        parent[next] = node;
        pq.push({dist[next], next});
      }
    }
  }
  if (dist[dst] == kUnset) return {};
  std::vector<std::size_t> path;
  for (std::size_t cur = dst; cur != src; cur = parent[cur]) path.push_back(cur);
  path.push_back(src);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

// Samples k distinct shortest paths between random (source, target) pairs on
// the snapshot, keeping only lengths within [min_len, max_len] node counts.
inline std::vector<std::vector<std::size_t>> sample_paths(const GraphSnapshot& base,
                                                          std::size_t k, std::size_t min_len,
                                                          std::size_t max_len,
                                                          unsigned long long seed) {
  if (k == 0) throw std::invalid_argument("sample_paths: k must be positive");
  base.validate();
  std::vector<std::vector<std::size_t>> adj(base.n_nodes);
  for (const Edge& e : base.edges) {
    if (e.weight > 0.0) adj[e.src].push_back(e.dst);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, base.n_nodes - 1);
  std::vector<std::vector<std::size_t>> paths;
  std::set<std::vector<std::size_t>> seen;
  const std::size_t budget = 400 * k;
  std::size_t attempts = 0;
  while (paths.size() < k) {
    if (++attempts > budget) {
      throw std::invalid_argument("sample_paths: exhausted " + std::to_string(budget) +
                                  " attempts; graph too sparse for " + std::to_string(k) +
                                  " paths of length [" + std::to_string(min_len) + "," +
                                  std::to_string(max_len) + "]");
    }
    const std::size_t src = pick(rng);
    const std::size_t dst = pick(rng);
    if (src == dst) continue;
    std::vector<std::size_t> path = detail::shortest_path(adj, src, dst);
    if (path.size() < min_len || path.size() > max_len) continue;
    if (!seen.insert(path).second) continue;
    paths.push_back(std::move(path));
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Labeling and splits
// ---------------------------------------------------------------------------

namespace detail {

struct PathIndex {
  std::set<std::pair<std::size_t, std::size_t>> edges;
  std::set<std::size_t> nodes;
};

inline PathIndex index_of(const std::vector<std::size_t>& path) {
  PathIndex idx;
  for (std::size_t i = 0; i < path.size(); ++i) {
    idx.nodes.insert(path[i]);
    if (i + 1 < path.size()) idx.edges.emplace(path[i], path[i + 1]);
  }
  return idx;
}

}  // namespace detail

// Labels every (path, t) in the sliding-window grid from the event log and
// splits the instances chronologically. Telecom rule: enough path-affecting
// alarms (failures of path edges, closures of path nodes) inside the
// horizon. Traffic rule: two consecutive path nodes congested at one step
// inside the horizon.
inline DatasetSplit build_instances(const TimeEvolvingGraph& graph,
                                    const std::vector<std::vector<std::size_t>>& paths,
                                    const std::vector<NodeEvent>& events, std::size_t window,
                                    std::size_t horizon, LabelRule rule,
                                    std::size_t alarm_threshold = 1,
                                    SplitFractions fractions = {}) {
  fractions.validate();
  if (paths.empty()) throw std::invalid_argument("build_instances: no paths");
  const std::size_t t_total = graph.n_steps();
  if (window + horizon > t_total) {
    throw std::invalid_argument("build_instances: window + horizon exceeds " +
                                std::to_string(t_total) + " steps");
  }
  std::map<long long, std::vector<const NodeEvent*>> by_step;
  for (const NodeEvent& ev : events) by_step[ev.t].push_back(&ev);

  std::vector<detail::PathIndex> index;
  index.reserve(paths.size());
  for (const auto& p : paths) index.push_back(detail::index_of(p));

  const std::size_t t_first = window - 1;
  const std::size_t t_last = t_total - horizon;  // exclusive
  const std::size_t n_t = t_last - t_first;
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n_t));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * n_t));
  if (n_train == 0 || n_train + n_val >= n_t) {
    throw std::invalid_argument("build_instances: split fractions leave an empty block");
  }

  DatasetSplit split;
  for (std::size_t pid = 0; pid < paths.size(); ++pid) {
    const auto& path = paths[pid];
    const auto& idx = index[pid];
    for (std::size_t t = t_first; t < t_last; ++t) {
      int label = 0;
      if (rule == LabelRule::kTelecom) {
        std::size_t alarms = 0;
        for (std::size_t s = t + 1; s <= t + horizon; ++s) {
          auto it = by_step.find(static_cast<long long>(s));
          if (it == by_step.end()) continue;
          for (const NodeEvent* ev : it->second) {
            if (ev->kind == EventKind::kLinkFailure && idx.edges.count({ev->src, ev->dst})) {
              ++alarms;
            } else if (ev->kind == EventKind::kClosure && idx.nodes.count(ev->node)) {
              ++alarms;
            }
          }
        }
        label = alarms >= alarm_threshold ? 1 : 0;
      } else {
        for (std::size_t s = t + 1; s <= t + horizon && label == 0; ++s) {
          auto it = by_step.find(static_cast<long long>(s));
          if (it == by_step.end()) continue;
          std::set<std::size_t> congested;
          for (const NodeEvent* ev : it->second) {
            if (ev->kind == EventKind::kCongestion) congested.insert(ev->node);
          }
          for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            if (congested.count(path[i]) && congested.count(path[i + 1])) {
              label = 1;
              break;
            }
          }
        }
      }
      PathInstance inst{pid, t, label};
      if (t < t_first + n_train) {
        split.train.push_back(inst);
      } else if (t < t_first + n_train + n_val) {
        split.val.push_back(inst);
      } else {
        split.test.push_back(inst);
      }
    }
  }
  return split;
}

// First validation prediction time; features up to (excluding) this step
// count as the training range for normalization.
inline std::size_t train_range_end(std::size_t t_total, std::size_t window, std::size_t horizon,
                                   SplitFractions fractions = {}) {
  fractions.validate();
  const std::size_t t_first = window - 1;
  const std::size_t n_t = t_total - horizon - t_first;
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n_t));
  return t_first + n_train;
}

// Per-channel min-max scaling to [0,1]. The scale is fit on steps
// [0, fit_end) only; later values are clamped. Non-finite readings are
// treated as 0 before fitting, constant channels map to 0.
inline TimeEvolvingGraph normalize_features(const TimeEvolvingGraph& graph,
                                            std::size_t fit_end) {
  if (graph.features.rank() != 3) {
    throw std::invalid_argument("normalize_features: expected T x N x d features, got " +
                                graph.features.shape_str());
  }
  const std::size_t t_total = graph.features.shape()[0];
  const std::size_t n = graph.features.shape()[1];
  const std::size_t d = graph.features.shape()[2];
  if (fit_end == 0 || fit_end > t_total) {
    throw std::invalid_argument("normalize_features: fit range end " +
                                std::to_string(fit_end) + " outside (0, " +
                                std::to_string(t_total) + "]");
  }
  TimeEvolvingGraph out = graph;
  for (double& x : out.features.values()) {
    if (!std::isfinite(x)) x = 0.0;
  }
  for (std::size_t c = 0; c < d; ++c) {
    double lo = out.features.at(0, 0, c), hi = lo;
    for (std::size_t t = 0; t < fit_end; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, out.features.at(t, i, c));
        hi = std::max(hi, out.features.at(t, i, c));
      }
    }
    const double span = hi - lo;
    for (std::size_t t = 0; t < t_total; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        double& x = out.features.at(t, i, c);
        x = span > 0.0 ? std::clamp((x - lo) / span, 0.0, 1.0) : 0.0;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace detail {

struct PlantedEpisode {
  std::size_t path = 0;
  std::size_t onset = 0;
  std::size_t dur = 2;
  bool own_signal = false;   // surge on the path's own nodes
  bool with_signal = false;  // surge on upstream in-neighbors
  bool closure_kind = false; // alarms are a node closure instead of link failures
};

// Congestion precursor interval, counted back from the onset. It ends
// before the horizon starts so the final window snapshot never shows it:
// only per-step (evolving) operators can.
constexpr std::size_t kPrecursorLead = 6;
constexpr std::size_t kPrecursorEnd = 4;

struct EventOrder {
  bool operator()(const NodeEvent& a, const NodeEvent& b) const {
    auto key = [](const NodeEvent& e) {
      return std::tuple<long long, int, std::size_t, std::size_t, std::size_t>(
          e.t, static_cast<int>(e.kind), e.node, e.src, e.dst);
    };
    return key(a) < key(b);
  }
};

inline GraphSnapshot make_base_graph(const GeneratorConfig& cfg, std::mt19937_64& rng) {
  GraphSnapshot base;
  base.n_nodes = cfg.n_nodes;
  base.time_index = 0;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
    for (std::size_t j = 0; j < cfg.n_nodes; ++j) {
      if (i == j) continue;
      if (coin(rng) >= cfg.edge_probability) continue;
      if (!cfg.allow_reciprocal && chosen.count({j, i})) continue;
      chosen.emplace(i, j);
      base.edges.push_back({i, j, 1.0});
    }
  }
  return base;
}

}  // namespace detail

// Deterministic synthetic network with planted failure dynamics. Each
// failure episode carries cues at three nested visibility levels:
//
//  - half the episodes surge on the path's own nodes while the alarm sits in
//    the horizon, readable even from isolated per-node signal histories;
//  - half surge on upstream in-neighbors over the same steps, readable by
//    anything that mixes neighbor signals through the graph;
//  - every episode makes an upstream reporter node spike a few steps earlier
//    and then cuts the reporter's links into the path before the horizon
//    opens (alongside a congestion burst over the path's nodes in the same
//    early interval). The spike reaches the path only through operators of
//    the steps where the links were still up, so a single window-end
//    operator cannot see it.
//
// Alarm events (link failures or a node closure on the path) run through the
// onset, followed by depressed readings strictly downstream. Background
// churn away from the paths doubles as camouflage: edges like the
// reporter's also drop at random, so a missing edge alone carries no label
// information. The episode rate is tuned until the positive-label fraction
// lands inside the accepted band.
inline SyntheticData generate_synthetic(const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng_base(cfg.seed * 6364136223846793005ULL + 1442695040888963407ULL);
  GraphSnapshot base = detail::make_base_graph(cfg, rng_base);

  std::vector<std::vector<std::size_t>> paths;
  try {
    paths = sample_paths(base, cfg.n_paths, cfg.min_path_len, cfg.max_path_len, cfg.seed + 1);
  } catch (const std::invalid_argument& ex) {
    throw std::invalid_argument(std::string("generator: ") + ex.what() +
                                " (raise edge_probability or lower n_paths)");
  }

  // Per-path structural context used by the planting rules.
  std::vector<detail::PathIndex> index;
  for (const auto& p : paths) index.push_back(detail::index_of(p));
  std::set<std::size_t> all_path_nodes;
  std::set<std::pair<std::size_t, std::size_t>> all_path_edges;
  for (const auto& idx : index) {
    all_path_nodes.insert(idx.nodes.begin(), idx.nodes.end());
    all_path_edges.insert(idx.edges.begin(), idx.edges.end());
  }
  std::vector<std::vector<std::size_t>> upstream(paths.size());
  std::vector<std::vector<std::size_t>> downstream(paths.size());
  {
    std::vector<std::vector<std::size_t>> out_adj(cfg.n_nodes);
    std::vector<std::vector<std::size_t>> in_adj(cfg.n_nodes);
    for (const Edge& e : base.edges) {
      out_adj[e.src].push_back(e.dst);
      in_adj[e.dst].push_back(e.src);
    }
    for (std::size_t pid = 0; pid < paths.size(); ++pid) {
      std::set<std::size_t> up;
      for (std::size_t node : index[pid].nodes) {
        for (std::size_t q : in_adj[node]) {
          if (!index[pid].nodes.count(q)) up.insert(q);
        }
      }
      upstream[pid].assign(up.begin(), up.end());
      // Strictly-downstream spill zone: nodes reachable from the path within
      // the propagation depth, excluding the path itself.
      std::set<std::size_t> down;
      std::vector<std::size_t> frontier(index[pid].nodes.begin(), index[pid].nodes.end());
      for (std::size_t hop = 0; hop < cfg.propagation_depth; ++hop) {
        std::vector<std::size_t> next;
        for (std::size_t node : frontier) {
          for (std::size_t q : out_adj[node]) {
            if (!index[pid].nodes.count(q) && down.insert(q).second) next.push_back(q);
          }
        }
        frontier = std::move(next);
      }
      downstream[pid].assign(down.begin(), down.end());
    }
  }
  // One upstream "reporter" per path: the first in-neighbor with at least one
  // edge into the path that is not itself a monitored path edge, so cutting
  // those links never fires an alarm on any path. with-nodes are the
  // remaining upstream neighbors.
  constexpr std::size_t kNoReporter = static_cast<std::size_t>(-1);
  std::vector<std::size_t> reporter(paths.size(), kNoReporter);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> reporter_edges(paths.size());
  std::vector<std::vector<std::size_t>> with_nodes(paths.size());
  for (std::size_t pid = 0; pid < paths.size(); ++pid) {
    for (std::size_t w : upstream[pid]) {
      std::vector<std::pair<std::size_t, std::size_t>> removable;
      for (const Edge& e : base.edges) {
        if (e.src == w && index[pid].nodes.count(e.dst) &&
            !all_path_edges.count({e.src, e.dst})) {
          removable.emplace_back(e.src, e.dst);
        }
      }
      if (!removable.empty()) {
        reporter[pid] = w;
        reporter_edges[pid] = std::move(removable);
        break;
      }
    }
    for (std::size_t q : upstream[pid]) {
      if (q != reporter[pid]) with_nodes[pid].push_back(q);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> background_edges;
  for (const Edge& e : base.edges) {
    if (!all_path_edges.count({e.src, e.dst})) background_edges.emplace_back(e.src, e.dst);
  }
  std::set<std::size_t> upstream_union;
  for (const auto& up : upstream) upstream_union.insert(up.begin(), up.end());
  std::vector<std::size_t> background_nodes;
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
    if (!all_path_nodes.count(i) && !upstream_union.count(i)) background_nodes.push_back(i);
  }

  const std::size_t t_total = cfg.n_steps;
  const std::size_t f_hor = cfg.horizon;

  // Candidate onset range keeps the full episode footprint inside [0, T).
  const std::size_t onset_lo = std::max(cfg.window, detail::kPrecursorLead + 1);
  const std::size_t onset_hi_margin = f_hor + 3 + cfg.propagation_depth + 2;
  if (t_total <= onset_lo + onset_hi_margin) {
    throw std::invalid_argument("generator: n_steps too small for the episode footprint");
  }
  const std::size_t onset_hi = t_total - onset_hi_margin;  // exclusive

  double rate = cfg.episode_rate;
  const bool tune = rate <= 0.0;
  if (tune) {
    const std::size_t n_t = t_total - f_hor - (cfg.window - 1);
    const double per_episode = static_cast<double>(f_hor) + 1.5;
    const double wanted = cfg.target_positive_fraction * static_cast<double>(n_t) / per_episode;
    rate = std::clamp(wanted / static_cast<double>(onset_hi - onset_lo), 1e-5, 0.2);
  }

  auto instantiate = [&](double episode_rate) {
    SyntheticData data;
    data.paths = paths;

    // 1) Plant episodes.
    std::mt19937_64 rng_ep(cfg.seed + 2);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<detail::PlantedEpisode> episodes;
    const std::size_t spacing = cfg.window + detail::kPrecursorLead + f_hor + 8;
    for (std::size_t pid = 0; pid < paths.size(); ++pid) {
      std::size_t next_allowed = onset_lo;
      for (std::size_t t = onset_lo; t < onset_hi; ++t) {
        if (t < next_allowed) continue;
        if (coin(rng_ep) >= episode_rate) continue;
        detail::PlantedEpisode ep;
        ep.path = pid;
        ep.onset = t;
        ep.dur = 2 + static_cast<std::size_t>(rng_ep() % 2);
        ep.own_signal = coin(rng_ep) < 0.5;
        ep.with_signal = coin(rng_ep) < 0.5 && !with_nodes[pid].empty();
        ep.closure_kind = coin(rng_ep) < 0.3;
        episodes.push_back(ep);
        next_allowed = t + spacing;
      }
    }

    // 2) Emit planted events.
    std::set<NodeEvent, detail::EventOrder> events;
    for (const detail::PlantedEpisode& ep : episodes) {
      const auto& path = paths[ep.path];
      for (std::size_t s = ep.onset - detail::kPrecursorLead;
           s + detail::kPrecursorEnd <= ep.onset; ++s) {
        for (std::size_t node : path) {
          NodeEvent ev;
          ev.t = static_cast<long long>(s);
          ev.kind = EventKind::kCongestion;
          ev.node = node;
          events.insert(ev);
        }
      }
      // The reporter's links into the path drop before the horizon opens and
      // stay down until the alarm clears, so the window-end snapshot never
      // routes its surge into the path; only the per-step operator sequence
      // does. Background churn also drops such edges at random, so a missing
      // edge by itself predicts nothing.
      if (reporter[ep.path] != kNoReporter) {
        const std::size_t cut_from =
            ep.onset - std::min<std::size_t>(f_hor, detail::kPrecursorEnd - 1);
        for (const auto& [src, dst] : reporter_edges[ep.path]) {
          for (std::size_t s = cut_from; s < ep.onset + ep.dur; ++s) {
            NodeEvent ev;
            ev.t = static_cast<long long>(s);
            ev.kind = EventKind::kLinkFailure;
            ev.src = src;
            ev.dst = dst;
            events.insert(ev);
          }
          NodeEvent rec;
          rec.t = static_cast<long long>(ep.onset + ep.dur);
          rec.kind = EventKind::kLinkRecovery;
          rec.src = src;
          rec.dst = dst;
          events.insert(rec);
        }
      }
      if (ep.closure_kind && path.size() >= 2) {
        const std::size_t victim = path[1 + rng_ep() % (path.size() - 1)];
        for (std::size_t s = ep.onset; s < ep.onset + ep.dur; ++s) {
          NodeEvent ev;
          ev.t = static_cast<long long>(s);
          ev.kind = EventKind::kClosure;
          ev.node = victim;
          events.insert(ev);
        }
      } else {
        const std::size_t n_edges = path.size() - 1;
        const std::size_t first = rng_ep() % n_edges;
        const std::size_t count = 1 + (n_edges > 1 ? rng_ep() % 2 : 0);
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t pos = (first + k) % n_edges;
          for (std::size_t s = ep.onset; s < ep.onset + ep.dur; ++s) {
            NodeEvent ev;
            ev.t = static_cast<long long>(s);
            ev.kind = EventKind::kLinkFailure;
            ev.src = path[pos];
            ev.dst = path[pos + 1];
            events.insert(ev);
          }
          NodeEvent rec;
          rec.t = static_cast<long long>(ep.onset + ep.dur);
          rec.kind = EventKind::kLinkRecovery;
          rec.src = path[pos];
          rec.dst = path[pos + 1];
          events.insert(rec);
        }
      }
    }

    // 3) Background churn away from the monitored paths.
    std::mt19937_64 rng_bg(cfg.seed + 3);
    std::uniform_real_distribution<double> bg_coin(0.0, 1.0);
    for (std::size_t t = 1; t + 4 < t_total; ++t) {
      if (!background_edges.empty() && bg_coin(rng_bg) < cfg.rate_link_failure) {
        const auto [src, dst] = background_edges[rng_bg() % background_edges.size()];
        const std::size_t dur = 1 + rng_bg() % 3;
        for (std::size_t s = t; s < t + dur; ++s) {
          NodeEvent ev;
          ev.t = static_cast<long long>(s);
          ev.kind = EventKind::kLinkFailure;
          ev.src = src;
          ev.dst = dst;
          events.insert(ev);
        }
        NodeEvent rec;
        rec.t = static_cast<long long>(t + dur);
        rec.kind = EventKind::kLinkRecovery;
        rec.src = src;
        rec.dst = dst;
        events.insert(rec);
      }
      if (!background_nodes.empty() && bg_coin(rng_bg) < cfg.rate_closure) {
        const std::size_t node = background_nodes[rng_bg() % background_nodes.size()];
        const std::size_t dur = 1 + rng_bg() % 2;
        for (std::size_t s = t; s < t + dur; ++s) {
          NodeEvent ev;
          ev.t = static_cast<long long>(s);
          ev.kind = EventKind::kClosure;
          ev.node = node;
          events.insert(ev);
        }
      }
      if (!background_nodes.empty() && bg_coin(rng_bg) < cfg.rate_congestion) {
        const std::size_t node = background_nodes[rng_bg() % background_nodes.size()];
        const std::size_t dur = 1 + rng_bg() % 2;
        for (std::size_t s = t; s < t + dur; ++s) {
          NodeEvent ev;
          ev.t = static_cast<long long>(s);
          ev.kind = EventKind::kCongestion;
          ev.node = node;
          events.insert(ev);
        }
      }
    }
    data.events.assign(events.begin(), events.end());

    // 4) Materialize snapshots by applying each step's events to the base
    // graph (rules do not compound across steps).
    std::map<long long, std::vector<NodeEvent>> at_step;
    for (const NodeEvent& ev : data.events) at_step[ev.t].push_back(ev);
    data.graph.snapshots.reserve(t_total);
    for (std::size_t t = 0; t < t_total; ++t) {
      auto it = at_step.find(static_cast<long long>(t));
      GraphSnapshot snap = it == at_step.end() ? base : evolve_adjacency(base, it->second);
      snap.time_index = static_cast<long long>(t);
      data.graph.snapshots.push_back(std::move(snap));
    }

    // 5) Signals: a network-wide daily rhythm plus a small static per-node
    // offset and AR noise, with planted shocks on top. The rhythm is shared
    // across nodes so the surges are the dominant node-to-node contrast.
    std::mt19937_64 rng_sig(cfg.seed + 4);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::normal_distribution<double> level(0.0, 0.05);
    Tensor shock({t_total, cfg.n_nodes});
    for (const detail::PlantedEpisode& ep : episodes) {
      // Horizon-aligned surges: elevated at the window's last step exactly
      // when an alarm falls inside the horizon.
      if (ep.own_signal) {
        for (std::size_t s = ep.onset - f_hor; s < ep.onset + ep.dur; ++s) {
          for (std::size_t node : paths[ep.path]) shock.at(s, node) += 0.5;
        }
      }
      if (ep.with_signal) {
        for (std::size_t s = ep.onset - f_hor; s < ep.onset + ep.dur; ++s) {
          for (std::size_t node : with_nodes[ep.path]) shock.at(s, node) += 0.6;
        }
      }
      // The reporter spikes while its links into the path are still up.
      if (reporter[ep.path] != kNoReporter) {
        for (std::size_t s = ep.onset - detail::kPrecursorLead;
             s + detail::kPrecursorEnd <= ep.onset; ++s) {
          shock.at(s, reporter[ep.path]) += 0.7;
        }
      }
      // Aftermath: depressed readings spill strictly downstream, never onto
      // the path itself, so surges and aftermath cannot cancel.
      const std::size_t dep_hi =
          std::min(t_total, ep.onset + ep.dur + cfg.propagation_depth);
      for (std::size_t s = ep.onset; s < dep_hi; ++s) {
        for (std::size_t node : downstream[ep.path]) shock.at(s, node) -= 0.3;
      }
    }
    for (double& x : shock.values()) x = std::clamp(x, -0.7, 0.7);

    data.graph.features = Tensor({t_total, cfg.n_nodes, cfg.d});
    std::vector<double> offset(cfg.n_nodes * cfg.d);
    for (double& b : offset) b = level(rng_sig);
    std::vector<double> ar(cfg.n_nodes * cfg.d, 0.0);
    constexpr double kTwoPi = 6.283185307179586;
    for (std::size_t t = 0; t < t_total; ++t) {
      for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
        for (std::size_t c = 0; c < cfg.d; ++c) {
          double& a = ar[i * cfg.d + c];
          a = 0.5 * a + noise(rng_sig);
          const double base_level =
              0.55 + 0.2 * std::sin(kTwoPi *
                                    (static_cast<double>(t) + 6.0 * static_cast<double>(c)) /
                                    24.0);
          const double shock_scale = c == 0 ? 1.0 : 0.8;
          data.graph.features.at(t, i, c) =
              base_level + offset[i * cfg.d + c] + a + shock_scale * shock.at(t, i);
        }
      }
    }
    return data;
  };

  SyntheticData data = instantiate(rate);
  if (tune) {
    for (int iter = 0; iter < 8; ++iter) {
      DatasetSplit split =
          build_instances(data.graph, data.paths, data.events, cfg.window, f_hor,
                          LabelRule::kTelecom, cfg.alarm_threshold);
      std::size_t positives = 0, total = 0;
      for (const auto* block : {&split.train, &split.val, &split.test}) {
        for (const PathInstance& inst : *block) {
          positives += static_cast<std::size_t>(inst.label);
          ++total;
        }
      }
      const double frac = static_cast<double>(positives) / static_cast<double>(total);
      if (frac >= 0.08 && frac <= 0.30) return data;
      const double scale =
          frac <= 0.0 ? 4.0 : std::clamp(cfg.target_positive_fraction / frac, 0.25, 4.0);
      rate = std::clamp(rate * scale, 1e-5, 0.2);
      data = instantiate(rate);
    }
    throw std::runtime_error(
        "generator: positive fraction did not reach [0.08, 0.30] after tuning");
  }
  return data;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

inline void write_dataset(const std::string& dir, const SyntheticData& data) {
  // snapshots.jsonl
  {
    std::string out;
    for (const GraphSnapshot& snap : data.graph.snapshots) {
      std::vector<Edge> edges = snap.edges;
      std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
      });
      nlohmann::json je = nlohmann::json::array();
      for (const Edge& e : edges) je.push_back({e.src, e.dst, e.weight});
      nlohmann::json line{{"t", snap.time_index}, {"edges", std::move(je)}};
      out += line.dump() + "\n";
    }
    write_text(dir + "/snapshots.jsonl", out);
  }
  // features.csv
  {
    const std::size_t t_total = data.graph.features.shape()[0];
    const std::size_t n = data.graph.features.shape()[1];
    const std::size_t d = data.graph.features.shape()[2];
    std::string out = "t,node";
    for (std::size_t c = 0; c < d; ++c) out += ",f" + std::to_string(c);
    out += "\n";
    for (std::size_t t = 0; t < t_total; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        out += std::to_string(t) + "," + std::to_string(i);
        for (std::size_t c = 0; c < d; ++c) {
          out += "," + format_double(data.graph.features.at(t, i, c));
        }
        out += "\n";
      }
    }
    write_text(dir + "/features.csv", out);
  }
  // events.jsonl
  {
    std::string out;
    for (const NodeEvent& ev : data.events) {
      nlohmann::json line;
      line["t"] = ev.t;
      line["kind"] = to_string(ev.kind);
      if (ev.is_link_event()) {
        line["edge"] = {ev.src, ev.dst};
      } else {
        line["node"] = ev.node;
      }
      out += line.dump() + "\n";
    }
    write_text(dir + "/events.jsonl", out);
  }
  // paths.txt
  {
    std::string out;
    for (const auto& path : data.paths) {
      for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(path[i]);
      }
      out += "\n";
    }
    write_text(dir + "/paths.txt", out);
  }
}

inline void write_labels(const std::string& dir, const DatasetSplit& split) {
  std::vector<const PathInstance*> rows;
  for (const auto* block : {&split.train, &split.val, &split.test}) {
    for (const PathInstance& inst : *block) rows.push_back(&inst);
  }
  std::sort(rows.begin(), rows.end(), [](const PathInstance* a, const PathInstance* b) {
    return std::tie(a->path_id, a->t) < std::tie(b->path_id, b->t);
  });
  std::string out = "t,path_id,label\n";
  for (const PathInstance* inst : rows) {
    out += std::to_string(inst->t) + "," + std::to_string(inst->path_id) + "," +
           std::to_string(inst->label) + "\n";
  }
  write_text(dir + "/labels.csv", out);
}

inline SyntheticData read_dataset(const std::string& dir) {
  SyntheticData data;
  // snapshots.jsonl
  {
    const std::vector<std::string> lines = read_lines(dir + "/snapshots.jsonl");
    if (lines.empty()) throw std::invalid_argument(dir + "/snapshots.jsonl: empty");
    std::size_t n_nodes = 0;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[ln]);
      } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(dir + "/snapshots.jsonl:" + std::to_string(ln + 1) + ": " +
                                    ex.what());
      }
      GraphSnapshot snap;
      try {
        snap.time_index = j.at("t").get<long long>();
        for (const auto& je : j.at("edges")) {
          Edge e;
          e.src = je.at(0).get<std::size_t>();
          e.dst = je.at(1).get<std::size_t>();
          e.weight = je.at(2).get<double>();
          snap.edges.push_back(e);
          n_nodes = std::max({n_nodes, e.src + 1, e.dst + 1});
        }
      } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(dir + "/snapshots.jsonl:" + std::to_string(ln + 1) + ": " +
                                    ex.what());
      }
      if (snap.time_index != static_cast<long long>(data.graph.snapshots.size())) {
        throw std::invalid_argument(dir + "/snapshots.jsonl:" + std::to_string(ln + 1) +
                                    ": non-contiguous time index");
      }
      data.graph.snapshots.push_back(std::move(snap));
    }
  }
  // features.csv (also fixes the true node count)
  {
    const std::vector<std::string> lines = read_lines(dir + "/features.csv");
    if (lines.empty()) throw std::invalid_argument(dir + "/features.csv: empty");
    const std::vector<std::string> header = split(lines[0], ',');
    if (header.size() < 3 || header[0] != "t" || header[1] != "node") {
      throw std::invalid_argument(dir + "/features.csv:1: bad header");
    }
    const std::size_t d = header.size() - 2;
    std::size_t t_total = 0, n_nodes = 0;
    std::vector<std::tuple<std::size_t, std::size_t, std::vector<double>>> rows;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const std::vector<std::string> f = split(lines[ln], ',');
      const std::string where = dir + "/features.csv:" + std::to_string(ln + 1);
      if (f.size() != header.size()) {
        throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) +
                                    " fields");
      }
      const auto t = static_cast<std::size_t>(parse_int(f[0], where));
      const auto node = static_cast<std::size_t>(parse_int(f[1], where));
      std::vector<double> vals(d);
      for (std::size_t c = 0; c < d; ++c) vals[c] = parse_double(f[2 + c], where);
      t_total = std::max(t_total, t + 1);
      n_nodes = std::max(n_nodes, node + 1);
      rows.emplace_back(t, node, std::move(vals));
    }
    if (t_total != data.graph.snapshots.size()) {
      throw std::invalid_argument(dir + "/features.csv: covers " + std::to_string(t_total) +
                                  " steps but snapshots.jsonl has " +
                                  std::to_string(data.graph.snapshots.size()));
    }
    data.graph.features = Tensor({t_total, n_nodes, d});
    for (const auto& [t, node, vals] : rows) {
      for (std::size_t c = 0; c < d; ++c) data.graph.features.at(t, node, c) = vals[c];
    }
    for (GraphSnapshot& snap : data.graph.snapshots) snap.n_nodes = n_nodes;
  }
  // events.jsonl (optional semantics-wise, but the pipeline always emits it)
  {
    const std::vector<std::string> lines = read_lines(dir + "/events.jsonl");
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const std::string where = dir + "/events.jsonl:" + std::to_string(ln + 1);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[ln]);
      } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(where + ": " + ex.what());
      }
      NodeEvent ev;
      try {
        ev.t = j.at("t").get<long long>();
        ev.kind = event_kind_from_string(j.at("kind").get<std::string>());
        if (ev.is_link_event()) {
          ev.src = j.at("edge").at(0).get<std::size_t>();
          ev.dst = j.at("edge").at(1).get<std::size_t>();
        } else {
          ev.node = j.at("node").get<std::size_t>();
        }
      } catch (const nlohmann::json::exception& ex) {
        throw std::invalid_argument(where + ": " + ex.what());
      }
      data.events.push_back(ev);
    }
  }
  // paths.txt
  {
    const std::vector<std::string> lines = read_lines(dir + "/paths.txt");
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const std::string where = dir + "/paths.txt:" + std::to_string(ln + 1);
      std::vector<std::size_t> path;
      for (const std::string& field : split(lines[ln], ',')) {
        path.push_back(static_cast<std::size_t>(parse_int(field, where)));
      }
      if (path.size() < 2) throw std::invalid_argument(where + ": path needs >= 2 nodes");
      for (std::size_t id : path) {
        if (id >= data.graph.n_nodes()) {
          throw std::invalid_argument(where + ": node id " + std::to_string(id) +
                                      " out of range");
        }
      }
      data.paths.push_back(std::move(path));
    }
    if (data.paths.empty()) throw std::invalid_argument(dir + "/paths.txt: no paths");
  }
  return data;
}

// Reads labels.csv back into chronologically split instances, validating
// path ids and prediction times against the loaded dataset.
inline DatasetSplit read_labels(const std::string& dir, const SyntheticData& data,
                                std::size_t window, std::size_t horizon,
                                SplitFractions fractions = {}) {
  fractions.validate();
  const std::vector<std::string> lines = read_lines(dir + "/labels.csv");
  if (lines.empty() || lines[0] != "t,path_id,label") {
    throw std::invalid_argument(dir + "/labels.csv:1: expected header 't,path_id,label'");
  }
  const std::size_t t_total = data.graph.n_steps();
  const std::size_t t_first = window - 1;
  const std::size_t t_last = t_total - horizon;
  const std::size_t n_t = t_last - t_first;
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n_t));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * n_t));

  DatasetSplit out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string where = dir + "/labels.csv:" + std::to_string(ln + 1);
    const std::vector<std::string> f = split(lines[ln], ',');
    if (f.size() != 3) throw std::invalid_argument(where + ": expected 3 fields");
    PathInstance inst;
    inst.t = static_cast<std::size_t>(parse_int(f[0], where));
    inst.path_id = static_cast<std::size_t>(parse_int(f[1], where));
    const long long label = parse_int(f[2], where);
    if (label != 0 && label != 1) throw std::invalid_argument(where + ": label must be 0 or 1");
    inst.label = static_cast<int>(label);
    if (inst.path_id >= data.paths.size()) {
      throw std::invalid_argument(where + ": unknown path_id " + std::to_string(inst.path_id));
    }
    if (inst.t < t_first || inst.t >= t_last) {
      throw std::invalid_argument(where + ": t=" + std::to_string(inst.t) +
                                  " outside the window/horizon grid");
    }
    if (inst.t < t_first + n_train) {
      out.train.push_back(inst);
    } else if (inst.t < t_first + n_train + n_val) {
      out.val.push_back(inst);
    } else {
      out.test.push_back(inst);
    }
  }
  if (out.size() == 0) throw std::invalid_argument(dir + "/labels.csv: no instances");
  return out;
}

}  // namespace pathcast
