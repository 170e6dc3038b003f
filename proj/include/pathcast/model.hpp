#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pathcast/autodiff.hpp"
#include "pathcast/graph.hpp"
#include "pathcast/io.hpp"
#include "pathcast/lrgcn.hpp"
#include "pathcast/sape.hpp"

namespace pathcast {

struct ModelConfig {
  std::size_t window = 12;   // M: snapshots per input window
  std::size_t horizon = 3;   // F: label lookahead in steps
  std::size_t d = 2;         // signal channels per node
  std::size_t h = 96;        // convolution hop width
  std::size_t u = 8;         // node encoding width
  std::size_t v = 8;         // path encoder width
  std::size_t d_s = 32;      // attention hidden width
  std::size_t r = 8;         // attention views
  std::size_t classes = 2;
  NormMode norm = NormMode::kAsymmetric;
  GraphMode mode = GraphMode::kEvolving;
  std::string layer2_input = "hidden_sequence";
  bool sape_bias = true;
  unsigned long long seed = 1;

  void validate() const {
    if (window == 0 || horizon == 0 || d == 0 || h == 0 || u == 0 || v == 0 || d_s == 0 ||
        r == 0) {
      throw std::invalid_argument("model config: all widths must be positive");
    }
    if (classes != 2) throw std::invalid_argument("model config: this task is binary (C=2)");
    if (layer2_input != "hidden_sequence") {
      throw std::invalid_argument("model config: unsupported layer2_input '" + layer2_input +
                                  "'");
    }
  }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"window", c.window},
                        {"horizon", c.horizon},
                        {"d", c.d},
                        {"h", c.h},
                        {"u", c.u},
                        {"v", c.v},
                        {"d_s", c.d_s},
                        {"r", c.r},
                        {"classes", c.classes},
                        {"normalization", to_string(c.norm)},
                        {"graph_mode", to_string(c.mode)},
                        {"layer2_input", c.layer2_input},
                        {"sape_bias", c.sape_bias},
                        {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected so a typo
// cannot silently fall back to a default.
inline ModelConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "window", "horizon", "d",          "h",            "u",         "v",    "d_s",
      "r",      "classes", "normalization", "graph_mode", "layer2_input", "sape_bias",
      "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("model config: unknown key '" + key + "'");
    }
  }
  ModelConfig c;
  try {
    c.window = j.value("window", c.window);
    c.horizon = j.value("horizon", c.horizon);
    c.d = j.value("d", c.d);
    c.h = j.value("h", c.h);
    c.u = j.value("u", c.u);
    c.v = j.value("v", c.v);
    c.d_s = j.value("d_s", c.d_s);
    c.r = j.value("r", c.r);
    c.classes = j.value("classes", c.classes);
    if (j.contains("normalization")) {
      c.norm = norm_mode_from_string(j.at("normalization").get<std::string>());
    }
    if (j.contains("graph_mode")) {
      c.mode = graph_mode_from_string(j.at("graph_mode").get<std::string>());
    }
    c.layer2_input = j.value("layer2_input", c.layer2_input);
    c.sape_bias = j.value("sape_bias", c.sape_bias);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

// Declarative list of every learnable tensor: name, shape and the fan-in
// used by the initializer (0 marks a zero-initialized bias).
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 0;
};

inline std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> specs;
  const char* layers[2] = {"l1", "l2"};
  const char* gates[4] = {"i", "f", "o", "c"};
  for (int li = 0; li < 2; ++li) {
    const std::size_t d_in = li == 0 ? c.d : c.u;
    for (const char* gate : gates) {
      const std::string base = std::string(layers[li]) + "." + gate + ".";
      for (const char* rel : {"in", "out"}) {
        specs.push_back({base + "intra.w0_" + rel, {d_in, c.h}, d_in});
        specs.push_back({base + "intra.w1_" + rel, {c.h, c.u}, c.h});
        specs.push_back({base + "inter.w0_" + rel, {c.u, c.h}, c.u});
        specs.push_back({base + "inter.w1_" + rel, {c.h, c.u}, c.h});
      }
    }
  }
  for (const char* gate : {"i", "f", "o", "g"}) {
    const std::string base = std::string("sape.lstm.");
    specs.push_back({base + "w_" + gate, {c.u, c.v}, c.u});
    specs.push_back({base + "u_" + gate, {c.v, c.v}, c.v});
    if (c.sape_bias) specs.push_back({base + "b_" + gate, {1, c.v}, 0});
  }
  specs.push_back({"sape.w_h1", {c.d_s, c.v}, c.v});
  specs.push_back({"sape.w_h2", {c.r, c.d_s}, c.d_s});
  specs.push_back({"fc.w", {c.r * c.v, c.classes}, c.r * c.v});
  specs.push_back({"fc.b", {1, c.classes}, 0});
  return specs;
}

struct ModelIds {
  CellIds l1, l2;
  SapeIds sape;
  ValueId fc_w = -1, fc_b = -1;
};

// Registers every parameter tensor on the tape in spec order, validating the
// map against the config's declared shapes.
inline ModelIds register_model(ComputeGraph& g, const ModelConfig& cfg, const ParamMap& params) {
  std::map<std::string, ValueId> by_name;
  for (const ParamSpec& spec : param_specs(cfg)) {
    auto it = params.find(spec.name);
    if (it == params.end()) {
      throw std::invalid_argument("parameters: missing '" + spec.name + "'");
    }
    if (it->second.shape() != spec.shape) {
      throw std::invalid_argument("parameters: '" + spec.name + "' has shape " +
                                  it->second.shape_str() + ", expected another");
    }
    by_name[spec.name] = g.parameter(spec.name, it->second);
  }
  if (params.size() != by_name.size()) {
    for (const auto& [name, t] : params) {
      if (!by_name.count(name)) {
        throw std::invalid_argument("parameters: unexpected entry '" + name + "'");
      }
    }
  }
  ModelIds ids;
  auto conv = [&](const std::string& base) {
    ConvIds c;
    c.w0_in = by_name.at(base + ".w0_in");
    c.w0_out = by_name.at(base + ".w0_out");
    c.w1_in = by_name.at(base + ".w1_in");
    c.w1_out = by_name.at(base + ".w1_out");
    return c;
  };
  auto gate = [&](const std::string& base) {
    GateIds gids;
    gids.intra = conv(base + ".intra");
    gids.inter = conv(base + ".inter");
    return gids;
  };
  auto cell = [&](const std::string& layer) {
    CellIds cids;
    cids.i = gate(layer + ".i");
    cids.f = gate(layer + ".f");
    cids.o = gate(layer + ".o");
    cids.c = gate(layer + ".c");
    return cids;
  };
  ids.l1 = cell("l1");
  ids.l2 = cell("l2");
  auto sape_block = [&](const char* gate_name, ValueId& w, ValueId& uu, ValueId& b) {
    w = by_name.at(std::string("sape.lstm.w_") + gate_name);
    uu = by_name.at(std::string("sape.lstm.u_") + gate_name);
    if (cfg.sape_bias) {
      b = by_name.at(std::string("sape.lstm.b_") + gate_name);
    } else {
      b = g.input(Tensor({1, cfg.v}));
    }
  };
  sape_block("i", ids.sape.w_i, ids.sape.u_i, ids.sape.b_i);
  sape_block("f", ids.sape.w_f, ids.sape.u_f, ids.sape.b_f);
  sape_block("o", ids.sape.w_o, ids.sape.u_o, ids.sape.b_o);
  sape_block("g", ids.sape.w_g, ids.sape.u_g, ids.sape.b_g);
  ids.sape.w_h1 = by_name.at("sape.w_h1");
  ids.sape.w_h2 = by_name.at("sape.w_h2");
  ids.fc_w = by_name.at("fc.w");
  ids.fc_b = by_name.at("fc.b");
  return ids;
}

// Memoizes per-snapshot normalization; windows at nearby prediction times
// share almost all of their operators.
class OperatorCache {
public:
  OperatorCache(const TimeEvolvingGraph& graph, GraphMode mode, NormMode norm)
      : graph_(&graph), mode_(mode), norm_(norm) {}

  std::vector<NormalizedPair> window(std::size_t t_end, std::size_t window_len) {
    if (window_len == 0) throw std::invalid_argument("operator cache: empty window");
    if (t_end + 1 < window_len || t_end >= graph_->n_steps()) {
      throw std::invalid_argument("operator cache: window ending at t=" +
                                  std::to_string(t_end) + " out of range");
    }
    std::vector<NormalizedPair> out;
    out.reserve(window_len);
    switch (mode_) {
      case GraphMode::kEvolving:
        for (std::size_t s = 0; s < window_len; ++s) {
          out.push_back(step(t_end - window_len + 1 + s));
        }
        break;
      case GraphMode::kStatic:
        out.assign(window_len, step(t_end));
        break;
      case GraphMode::kIdentity: {
        if (!identity_.a_in) {
          identity_.mode = norm_;
          auto eye = std::make_shared<const CsrMatrix>(CsrMatrix::identity(graph_->n_nodes()));
          identity_.a_in = eye;
          identity_.a_out = eye;
        }
        out.assign(window_len, identity_);
        break;
      }
    }
    return out;
  }

private:
  const NormalizedPair& step(std::size_t t) {
    auto it = cache_.find(t);
    if (it == cache_.end()) {
      it = cache_.emplace(t, normalize_snapshot(graph_->snapshots[t], norm_)).first;
    }
    return it->second;
  }

  const TimeEvolvingGraph* graph_;
  GraphMode mode_;
  NormMode norm_;
  std::map<std::size_t, NormalizedPair> cache_;
  NormalizedPair identity_;
};

// One classification request: the window ends at t, the path is a node-id
// sequence, label is the optional supervision target (-1 when absent), tag
// is an opaque caller identifier carried into exports.
struct PathRequest {
  std::size_t t = 0;
  std::vector<std::size_t> nodes;
  int label = -1;
  std::size_t tag = 0;
};

struct BatchIds {
  ValueId loss = -1;
  std::vector<ValueId> probs;
  std::vector<ValueId> attention;
};

// Builds the forward tape for a set of requests. The window encoding is
// built once per distinct prediction time and shared by every path at that
// time. Output vectors are index-aligned with `requests`.
inline BatchIds build_forward(ComputeGraph& g, const ModelIds& ids, const ModelConfig& cfg,
                              const TimeEvolvingGraph& graph, OperatorCache& ops,
                              const std::vector<PathRequest>& requests, bool with_loss) {
  cfg.validate();
  const std::size_t n = graph.n_nodes();
  std::map<std::size_t, std::vector<std::size_t>> by_time;
  for (std::size_t i = 0; i < requests.size(); ++i) by_time[requests[i].t].push_back(i);

  BatchIds out;
  out.probs.assign(requests.size(), -1);
  out.attention.assign(requests.size(), -1);
  ValueId total_loss = -1;
  for (const auto& [t, idxs] : by_time) {
    std::vector<NormalizedPair> adj = ops.window(t, cfg.window);
    std::vector<ValueId> x_steps;
    x_steps.reserve(cfg.window);
    for (std::size_t s = 0; s < cfg.window; ++s) {
      x_steps.push_back(g.input(graph.features_at(t - cfg.window + 1 + s)));
    }
    ValueId omega = encode_sequence(g, ids.l1, ids.l2, x_steps, adj, n, cfg.u);
    for (std::size_t i : idxs) {
      const PathRequest& req = requests[i];
      if (req.nodes.empty()) throw std::invalid_argument("path request: empty path");
      for (std::size_t id : req.nodes) {
        if (id >= n) {
          throw std::invalid_argument("path request: node id " + std::to_string(id) +
                                      " out of range");
        }
      }
      ValueId p = index_path(g, omega, req.nodes);
      ValueId gamma = path_lstm(g, ids.sape, p, cfg.v);
      ValueId s_attn = self_attention(g, ids.sape, gamma);
      ValueId e = pool_embedding(g, s_attn, gamma);
      ValueId flat = g.reshape(e, {1, cfg.r * cfg.v});
      ValueId logits = g.add(g.matmul(flat, ids.fc_w), ids.fc_b);
      ValueId probs = g.row_softmax(logits);
      out.probs[i] = probs;
      out.attention[i] = s_attn;
      if (with_loss) {
        if (req.label < 0 || static_cast<std::size_t>(req.label) >= cfg.classes) {
          throw std::invalid_argument("path request: label out of range");
        }
        Tensor onehot({1, cfg.classes});
        onehot.at(0, static_cast<std::size_t>(req.label)) = 1.0;
        ValueId term =
            g.scale(g.reduce_sum(g.mul(g.log_clamped(probs), g.input(onehot))), -1.0);
        total_loss = total_loss < 0 ? term : g.add(total_loss, term);
      }
    }
  }
  out.loss = total_loss;
  return out;
}

struct Prediction {
  std::vector<double> probabilities;
  int predicted = 0;
  Tensor attention;  // r x m importance views for the path
};

// Pure inference over immutable parameters.
inline std::vector<Prediction> forward(const ParamMap& params, const ModelConfig& cfg,
                                       const TimeEvolvingGraph& graph,
                                       const std::vector<PathRequest>& requests) {
  ComputeGraph g;
  ModelIds ids = register_model(g, cfg, params);
  OperatorCache ops(graph, cfg.mode, cfg.norm);
  BatchIds batch = build_forward(g, ids, cfg, graph, ops, requests, /*with_loss=*/false);
  std::vector<Prediction> preds;
  preds.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    Prediction p;
    const Tensor& probs = g.value(batch.probs[i]);
    p.probabilities.assign(probs.data(), probs.data() + probs.numel());
    p.predicted = 0;
    for (std::size_t c = 1; c < p.probabilities.size(); ++c) {
      if (p.probabilities[c] > p.probabilities[p.predicted]) p.predicted = static_cast<int>(c);
    }
    p.attention = g.value(batch.attention[i]);
    preds.push_back(std::move(p));
  }
  return preds;
}

// Summed cross-entropy over the batch, with the same log clamp the training
// tape uses.
inline double cross_entropy(const std::vector<Prediction>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(preds.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= preds[i].probabilities.size()) {
      throw std::invalid_argument("cross_entropy: label out of range at index " +
                                  std::to_string(i));
    }
    total -= std::log(std::max(preds[i].probabilities[static_cast<std::size_t>(labels[i])],
                               kLogClamp));
  }
  return total;
}

// Per-position importance: the mean of the position's attention column over
// the r views. Rows come out ordered by (tag, position).
inline std::string attention_csv(const std::vector<PathRequest>& requests,
                                 const std::vector<Prediction>& preds) {
  if (requests.size() != preds.size()) {
    throw std::invalid_argument("attention_csv: size mismatch");
  }
  std::vector<std::size_t> order(requests.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return requests[a].tag < requests[b].tag; });
  std::string out = "path_id,position,node_id,importance\n";
  for (std::size_t i : order) {
    const Tensor& s = preds[i].attention;
    for (std::size_t pos = 0; pos < s.cols(); ++pos) {
      double mean = 0.0;
      for (std::size_t view = 0; view < s.rows(); ++view) mean += s.at(view, pos);
      mean /= static_cast<double>(s.rows());
      out += std::to_string(requests[i].tag) + "," + std::to_string(pos) + "," +
             std::to_string(requests[i].nodes[pos]) + "," + format_double(mean) + "\n";
    }
  }
  return out;
}

constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const ParamMap& params) {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["config"] = config_to_json(cfg);
  nlohmann::json ps = nlohmann::json::object();
  for (const auto& [name, tensor] : params) {
    ps[name] = nlohmann::json{{"shape", tensor.shape()}, {"data", tensor.values()}};
  }
  doc["params"] = std::move(ps);
  write_text(path, doc.dump() + "\n");
}

inline std::pair<ModelConfig, ParamMap> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open checkpoint '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("malformed checkpoint '" + path + "'");
  }
  if (!doc.is_object() || !doc.contains("version")) {
    throw std::invalid_argument("malformed checkpoint '" + path + "': no version");
  }
  if (doc["version"] != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint '" + path + "': unsupported version " +
                                doc["version"].dump());
  }
  ModelConfig cfg;
  ParamMap params;
  try {
    cfg = config_from_json(doc.at("config"));
    for (const auto& [name, pj] : doc.at("params").items()) {
      auto shape = pj.at("shape").get<std::vector<std::size_t>>();
      auto data = pj.at("data").get<std::vector<double>>();
      params.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument("malformed checkpoint '" + path + "': " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw std::invalid_argument("checkpoint '" + path + "': " + ex.what());
  }
  // A full shape audit: the stored parameter set must match the config.
  for (const ParamSpec& spec : param_specs(cfg)) {
    auto it = params.find(spec.name);
    if (it == params.end()) {
      throw std::invalid_argument("checkpoint '" + path + "': missing parameter '" + spec.name +
                                  "'");
    }
    if (it->second.shape() != spec.shape) {
      throw std::invalid_argument("checkpoint '" + path + "': parameter '" + spec.name +
                                  "' has shape " + it->second.shape_str());
    }
  }
  return {cfg, std::move(params)};
}

}  // namespace pathcast
