#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathcast/autodiff.hpp"
#include "pathcast/graph.hpp"

namespace pathcast {

// Tape handles for one two-hop relational convolution: first-hop and
// second-hop weights per relation {in, out}.
struct ConvIds {
  ValueId w0_in = -1, w0_out = -1;
  ValueId w1_in = -1, w1_out = -1;
};

// One gate: the intra-time convolution applied to the step input and the
// inter-time convolution applied to the previous hidden state.
struct GateIds {
  ConvIds intra;
  ConvIds inter;
};

// The four gates of the recurrent cell.
struct CellIds {
  GateIds i, f, o, c;
};

struct StateIds {
  ValueId hidden = -1;
  ValueId cell = -1;
};

// Two-hop relational propagation: the inner rectified sum over relations is
// computed once, then propagated and transformed per relation and summed
// again. No outer nonlinearity here.
inline ValueId two_hop_conv(ComputeGraph& g, const NormalizedPair& adj, ValueId x,
                            const ConvIds& p) {
  ValueId inner = g.relu(g.add(g.matmul(g.spmm(adj.a_in, x), p.w0_in),
                               g.matmul(g.spmm(adj.a_out, x), p.w0_out)));
  return g.add(g.matmul(g.spmm(adj.a_in, inner), p.w1_in),
               g.matmul(g.spmm(adj.a_out, inner), p.w1_out));
}

// Gate preactivation: intra-time term on the current input under the current
// operators plus inter-time term on the previous hidden state under the
// previous step's operators. The gate nonlinearity is applied by the caller.
inline ValueId gate_preactivation(ComputeGraph& g, const GateIds& theta, ValueId x_t,
                                  ValueId h_prev, const NormalizedPair& adj_t,
                                  const NormalizedPair& adj_prev) {
  return g.add(two_hop_conv(g, adj_t, x_t, theta.intra),
               two_hop_conv(g, adj_prev, h_prev, theta.inter));
}

// One recurrent step: input/forget/output gates and the memory cell. The
// hidden state is the output gate times the cell (no extra squashing).
inline StateIds lrgcn_step(ComputeGraph& g, const CellIds& p, StateIds state, ValueId x_t,
                           const NormalizedPair& adj_t, const NormalizedPair& adj_prev) {
  ValueId gate_i = g.sigmoid(gate_preactivation(g, p.i, x_t, state.hidden, adj_t, adj_prev));
  ValueId gate_f = g.sigmoid(gate_preactivation(g, p.f, x_t, state.hidden, adj_t, adj_prev));
  ValueId gate_o = g.sigmoid(gate_preactivation(g, p.o, x_t, state.hidden, adj_t, adj_prev));
  ValueId cand = g.tanh_op(gate_preactivation(g, p.c, x_t, state.hidden, adj_t, adj_prev));
  StateIds next;
  next.cell = g.add(g.mul(gate_f, state.cell), g.mul(gate_i, cand));
  next.hidden = g.mul(gate_o, next.cell);
  return next;
}

enum class GraphMode { kEvolving, kStatic, kIdentity };

inline const char* to_string(GraphMode m) {
  switch (m) {
    case GraphMode::kEvolving: return "evolving";
    case GraphMode::kStatic: return "static";
    case GraphMode::kIdentity: return "identity";
  }
  return "?";
}

inline GraphMode graph_mode_from_string(const std::string& s) {
  if (s == "evolving") return GraphMode::kEvolving;
  if (s == "static") return GraphMode::kStatic;
  if (s == "identity") return GraphMode::kIdentity;
  throw std::invalid_argument("unknown graph mode '" + s + "'");
}

// Per-step propagation operators for the window ending at t_end (inclusive),
// resolved for the requested graph mode: evolving uses each step's own
// snapshot, static reuses the window's last snapshot everywhere, identity
// decouples the nodes entirely.
inline std::vector<NormalizedPair> window_operators(const TimeEvolvingGraph& graph,
                                                    std::size_t t_end, std::size_t window_len,
                                                    GraphMode mode, NormMode norm) {
  if (window_len == 0) throw std::invalid_argument("window_operators: empty window");
  if (t_end + 1 < window_len || t_end >= graph.n_steps()) {
    throw std::invalid_argument("window_operators: window [" +
                                std::to_string(static_cast<long long>(t_end) -
                                               static_cast<long long>(window_len) + 1) +
                                ", " + std::to_string(t_end) + "] out of range");
  }
  std::vector<NormalizedPair> out;
  out.reserve(window_len);
  switch (mode) {
    case GraphMode::kEvolving: {
      for (std::size_t s = 0; s < window_len; ++s) {
        out.push_back(normalize_snapshot(graph.snapshots[t_end - window_len + 1 + s], norm));
      }
      break;
    }
    case GraphMode::kStatic: {
      NormalizedPair last = normalize_snapshot(graph.snapshots[t_end], norm);
      out.assign(window_len, last);
      break;
    }
    case GraphMode::kIdentity: {
      NormalizedPair eye;
      eye.mode = norm;
      auto csr = std::make_shared<const CsrMatrix>(CsrMatrix::identity(graph.n_nodes()));
      eye.a_in = csr;
      eye.a_out = csr;
      out.assign(window_len, eye);
      break;
    }
  }
  return out;
}

// Two stacked cells over a window of M steps. Layer 1 starts from zero
// state; layer 2 starts from layer 1's final (hidden, cell) and consumes
// layer 1's hidden sequence. Returns layer 2's final hidden state (N x u).
// At step 0 the previous-step operators default to step 0's own.
inline ValueId encode_sequence(ComputeGraph& g, const CellIds& layer1, const CellIds& layer2,
                               const std::vector<ValueId>& x_steps,
                               const std::vector<NormalizedPair>& adj_steps, std::size_t n_nodes,
                               std::size_t hidden_width) {
  if (x_steps.empty()) throw std::invalid_argument("encode_sequence: empty window");
  if (x_steps.size() != adj_steps.size()) {
    throw std::invalid_argument("encode_sequence: " + std::to_string(x_steps.size()) +
                                " inputs vs " + std::to_string(adj_steps.size()) + " operators");
  }
  const std::size_t m = x_steps.size();
  StateIds state1;
  state1.hidden = g.input(Tensor({n_nodes, hidden_width}));
  state1.cell = state1.hidden;
  std::vector<ValueId> hidden_seq;
  hidden_seq.reserve(m);
  for (std::size_t s = 0; s < m; ++s) {
    const NormalizedPair& prev = adj_steps[s == 0 ? 0 : s - 1];
    state1 = lrgcn_step(g, layer1, state1, x_steps[s], adj_steps[s], prev);
    hidden_seq.push_back(state1.hidden);
  }
  StateIds state2 = state1;
  for (std::size_t s = 0; s < m; ++s) {
    const NormalizedPair& prev = adj_steps[s == 0 ? 0 : s - 1];
    state2 = lrgcn_step(g, layer2, state2, hidden_seq[s], adj_steps[s], prev);
  }
  return state2.hidden;
}

}  // namespace pathcast
