#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pathcast/csr.hpp"
#include "pathcast/tensor.hpp"

namespace pathcast {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 1.0;
};

// One time step of the evolving network: a weighted directed edge list.
// An edge j -> i populates adjacency entry A[i][j] (rows index destinations).
struct GraphSnapshot {
  std::size_t n_nodes = 0;
  std::vector<Edge> edges;
  long long time_index = 0;

  void validate() const {
    if (n_nodes == 0) throw std::invalid_argument("snapshot: n_nodes must be positive");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Edge& e : edges) {
      if (e.src >= n_nodes || e.dst >= n_nodes) {
        throw std::invalid_argument("snapshot t=" + std::to_string(time_index) +
                                    ": edge id out of range (" + std::to_string(e.src) + "," +
                                    std::to_string(e.dst) + ")");
      }
      if (e.weight < 0.0) {
        throw std::invalid_argument("snapshot t=" + std::to_string(time_index) +
                                    ": negative edge weight");
      }
      if (!seen.emplace(e.src, e.dst).second) {
        throw std::invalid_argument("snapshot t=" + std::to_string(time_index) +
                                    ": duplicate edge (" + std::to_string(e.src) + "," +
                                    std::to_string(e.dst) + ")");
      }
    }
  }
};

// Snapshot sequence plus the aligned signal tensor of shape T x N x d.
struct TimeEvolvingGraph {
  std::vector<GraphSnapshot> snapshots;
  Tensor features;

  std::size_t n_steps() const { return snapshots.size(); }
  std::size_t n_nodes() const { return snapshots.empty() ? 0 : snapshots.front().n_nodes; }
  std::size_t n_channels() const {
    return features.rank() == 3 ? features.shape()[2] : 0;
  }

  // N x d signal matrix at step t.
  Tensor features_at(std::size_t t) const {
    const std::size_t n = features.shape()[1], d = features.shape()[2];
    if (t >= features.shape()[0]) {
      throw std::out_of_range("features_at: t=" + std::to_string(t) + " beyond " +
                              std::to_string(features.shape()[0]));
    }
    Tensor out({n, d});
    std::copy(features.data() + t * n * d, features.data() + (t + 1) * n * d, out.data());
    return out;
  }
};

enum class NormMode { kAsymmetric, kSymmetric };

inline const char* to_string(NormMode m) {
  return m == NormMode::kAsymmetric ? "asymmetric" : "symmetric";
}

inline NormMode norm_mode_from_string(const std::string& s) {
  if (s == "asymmetric") return NormMode::kAsymmetric;
  if (s == "symmetric") return NormMode::kSymmetric;
  throw std::invalid_argument("unknown normalization mode '" + s + "'");
}

// The two per-relation propagation operators for one snapshot.
struct NormalizedPair {
  std::shared_ptr<const CsrMatrix> a_in;
  std::shared_ptr<const CsrMatrix> a_out;
  NormMode mode = NormMode::kAsymmetric;
};

namespace detail {

// Normalizes one accumulated adjacency (self-loops already added).
inline CsrMatrix normalize_accumulated(
    std::size_t n, const std::map<std::pair<std::size_t, std::size_t>, double>& entries,
    NormMode mode) {
  std::vector<double> degree(n, 0.0);
  for (const auto& [key, w] : entries) degree[key.first] += w;
  std::vector<CsrMatrix::Triplet> trips;
  trips.reserve(entries.size());
  for (const auto& [key, w] : entries) {
    if (w == 0.0) continue;
    double v;
    if (mode == NormMode::kAsymmetric) {
      v = w / degree[key.first];
    } else {
      v = w / (std::sqrt(degree[key.first]) * std::sqrt(degree[key.second]));
    }
    trips.push_back({key.first, key.second, v});
  }
  return CsrMatrix::from_triplets(n, trips);
}

}  // namespace detail

// Eq.-3 style operators: A-hat = A + I per relation, then D-hat^{-1} A-hat
// (asymmetric) or D-hat^{-1/2} A-hat D-hat^{-1/2} (symmetric). The out
// relation uses the transposed adjacency.
inline NormalizedPair normalize_snapshot(const GraphSnapshot& snapshot, NormMode mode) {
  snapshot.validate();
  const std::size_t n = snapshot.n_nodes;
  std::map<std::pair<std::size_t, std::size_t>, double> a_in, a_out;
  for (std::size_t i = 0; i < n; ++i) {
    a_in[{i, i}] = 1.0;
    a_out[{i, i}] = 1.0;
  }
  for (const Edge& e : snapshot.edges) {
    if (e.weight == 0.0) continue;
    a_in[{e.dst, e.src}] += e.weight;
    a_out[{e.src, e.dst}] += e.weight;
  }
  NormalizedPair out;
  out.mode = mode;
  out.a_in = std::make_shared<const CsrMatrix>(detail::normalize_accumulated(n, a_in, mode));
  out.a_out = std::make_shared<const CsrMatrix>(detail::normalize_accumulated(n, a_out, mode));
  return out;
}

enum class EventKind { kClosure, kCongestion, kLinkFailure, kLinkRecovery };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kClosure: return "closure";
    case EventKind::kCongestion: return "congestion";
    case EventKind::kLinkFailure: return "link_failure";
    case EventKind::kLinkRecovery: return "link_recovery";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "closure") return EventKind::kClosure;
  if (s == "congestion") return EventKind::kCongestion;
  if (s == "link_failure") return EventKind::kLinkFailure;
  if (s == "link_recovery") return EventKind::kLinkRecovery;
  throw std::invalid_argument("unknown event kind '" + s + "'");
}

// A network event. Closure/congestion address a node; link events an edge.
struct NodeEvent {
  long long t = 0;
  EventKind kind = EventKind::kClosure;
  std::size_t node = 0;
  std::size_t src = 0;
  std::size_t dst = 0;

  bool is_link_event() const {
    return kind == EventKind::kLinkFailure || kind == EventKind::kLinkRecovery;
  }
};

// Applies events to a snapshot: closure removes all edges touching the node,
// congestion halves their weights, link_failure removes one edge and
// link_recovery restores it at weight 1.
inline GraphSnapshot evolve_adjacency(const GraphSnapshot& base,
                                      const std::vector<NodeEvent>& events) {
  base.validate();
  GraphSnapshot out = base;
  for (const NodeEvent& ev : events) {
    switch (ev.kind) {
      case EventKind::kClosure: {
        if (ev.node >= out.n_nodes) throw std::invalid_argument("closure: node out of range");
        std::erase_if(out.edges,
                      [&](const Edge& e) { return e.src == ev.node || e.dst == ev.node; });
        break;
      }
      case EventKind::kCongestion: {
        if (ev.node >= out.n_nodes) throw std::invalid_argument("congestion: node out of range");
        for (Edge& e : out.edges) {
          if (e.src == ev.node || e.dst == ev.node) e.weight *= 0.5;
        }
        break;
      }
      case EventKind::kLinkFailure: {
        if (ev.src >= out.n_nodes || ev.dst >= out.n_nodes) {
          throw std::invalid_argument("link_failure: node out of range");
        }
        std::erase_if(out.edges,
                      [&](const Edge& e) { return e.src == ev.src && e.dst == ev.dst; });
        break;
      }
      case EventKind::kLinkRecovery: {
        if (ev.src >= out.n_nodes || ev.dst >= out.n_nodes) {
          throw std::invalid_argument("link_recovery: node out of range");
        }
        bool found = false;
        for (Edge& e : out.edges) {
          if (e.src == ev.src && e.dst == ev.dst) {
            e.weight = 1.0;
            found = true;
            break;
          }
        }
        if (!found) out.edges.push_back({ev.src, ev.dst, 1.0});
        break;
      }
    }
  }
  return out;
}

struct ValidationReport {
  std::vector<std::string> findings;
  bool ok() const { return findings.empty(); }
};

// Structural consistency report for a full snapshot/feature sequence.
inline ValidationReport validate_sequence(const TimeEvolvingGraph& graph) {
  ValidationReport report;
  if (graph.snapshots.empty()) {
    report.findings.push_back("no snapshots");
    return report;
  }
  const std::size_t n = graph.snapshots.front().n_nodes;
  for (const GraphSnapshot& s : graph.snapshots) {
    if (s.n_nodes != n) {
      report.findings.push_back("snapshot t=" + std::to_string(s.time_index) +
                                ": node count " + std::to_string(s.n_nodes) + " != " +
                                std::to_string(n));
    }
    try {
      s.validate();
    } catch (const std::exception& ex) {
      report.findings.push_back(ex.what());
    }
  }
  if (graph.features.rank() != 3) {
    report.findings.push_back("features: expected rank-3 tensor, got " +
                              graph.features.shape_str());
    return report;
  }
  const auto& shape = graph.features.shape();
  if (shape[0] != graph.snapshots.size()) {
    report.findings.push_back("features: length " + std::to_string(shape[0]) +
                              " != snapshot count " + std::to_string(graph.snapshots.size()));
  }
  if (shape[1] != n) {
    report.findings.push_back("features: node dimension " + std::to_string(shape[1]) +
                              " != " + std::to_string(n));
  }
  for (std::size_t t = 0; t < shape[0]; ++t) {
    for (std::size_t i = 0; i < shape[1]; ++i) {
      for (std::size_t c = 0; c < shape[2]; ++c) {
        const double v = graph.features.at(t, i, c);
        if (!(v >= 0.0 && v <= 1.0)) {
          report.findings.push_back("feature out of [0,1] at t=" + std::to_string(t) +
                                    " node=" + std::to_string(i) +
                                    " channel=" + std::to_string(c));
          if (report.findings.size() > 32) return report;  // cap noise
        }
      }
    }
  }
  return report;
}

}  // namespace pathcast
