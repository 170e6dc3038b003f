#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pathcast/autodiff.hpp"

namespace pathcast {

// Tape handles for the path encoder: a standard gated recurrence u -> v with
// biases (input/forget/output/candidate blocks) and the two attention maps.
struct SapeIds {
  ValueId w_i = -1, u_i = -1, b_i = -1;
  ValueId w_f = -1, u_f = -1, b_f = -1;
  ValueId w_o = -1, u_o = -1, b_o = -1;
  ValueId w_g = -1, u_g = -1, b_g = -1;
  ValueId w_h1 = -1;  // d_s x v
  ValueId w_h2 = -1;  // r x d_s
};

// Selects path rows out of the node-encoding matrix. Duplicates are allowed:
// a path may revisit a node.
inline ValueId index_path(ComputeGraph& g, ValueId omega, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("index_path: empty path");
  return g.gather_rows(omega, ids);
}

// Standard gated recurrence over the m rows of P (m x u) from zero initial
// state; returns the m x v matrix of hidden states, one row per position.
inline ValueId path_lstm(ComputeGraph& g, const SapeIds& p, ValueId path_rows, std::size_t v) {
  const std::size_t m = g.value(path_rows).rows();
  ValueId h = g.input(Tensor({1, v}));
  ValueId c = h;
  std::vector<ValueId> hidden;
  hidden.reserve(m);
  for (std::size_t t = 0; t < m; ++t) {
    ValueId x = g.gather_rows(path_rows, {t});
    ValueId pre_i = g.add(g.add(g.matmul(x, p.w_i), g.matmul(h, p.u_i)), p.b_i);
    ValueId pre_f = g.add(g.add(g.matmul(x, p.w_f), g.matmul(h, p.u_f)), p.b_f);
    ValueId pre_o = g.add(g.add(g.matmul(x, p.w_o), g.matmul(h, p.u_o)), p.b_o);
    ValueId pre_g = g.add(g.add(g.matmul(x, p.w_g), g.matmul(h, p.u_g)), p.b_g);
    c = g.add(g.mul(g.sigmoid(pre_f), c), g.mul(g.sigmoid(pre_i), g.tanh_op(pre_g)));
    h = g.mul(g.sigmoid(pre_o), g.tanh_op(c));
    hidden.push_back(h);
  }
  return m == 1 ? hidden.front() : g.concat_rows(hidden);
}

// Importance scores from r views: S = row_softmax(W_h2 tanh(W_h1 Gamma^T)),
// softmax taken over the m positions independently per view.
inline ValueId self_attention(ComputeGraph& g, const SapeIds& p, ValueId gamma) {
  ValueId hidden = g.tanh_op(g.matmul(p.w_h1, g.transpose(gamma)));  // d_s x m
  return g.row_softmax(g.matmul(p.w_h2, hidden));                    // r x m
}

// Fixed-size pooling: E = S Gamma (r x v), independent of the path length.
inline ValueId pool_embedding(ComputeGraph& g, ValueId s, ValueId gamma) {
  return g.matmul(s, gamma);
}

}  // namespace pathcast
